#pragma once

#include "trace/absynth/generator.hpp"
#include "trace/transformer/model.hpp"

namespace fixtures {

// A corpus over a small lexicon (per_category words of each POS) so models stay tiny.
inline trace::absynth::CorpusConfig tiny_corpus_config(int n_sentences, int per_category, std::uint64_t seed) {
  trace::absynth::CorpusConfig cfg;
  cfg.n_sentences = n_sentences;
  cfg.seed = seed;
  cfg.category_counts.clear();
  for (int p = 0; p < trace::absynth::kNumPos; ++p) cfg.category_counts[static_cast<trace::absynth::Pos>(p)] = per_category;
  cfg.zipf.vocab_size = per_category * trace::absynth::kNumPos;
  return cfg;
}

inline trace::absynth::Corpus tiny_corpus(int n_sentences, int per_category, std::uint64_t seed) {
  return trace::absynth::generate_corpus(tiny_corpus_config(n_sentences, per_category, seed));
}

inline std::vector<std::vector<std::int32_t>> encode_all(const std::vector<trace::absynth::SentenceRecord>& rs,
                                                        const trace::transformer::Vocab& v) {
  std::vector<std::vector<std::int32_t>> out;
  for (const auto& r : rs) out.push_back(v.encode(r));
  return out;
}

}  // namespace fixtures
