#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trace/absynth/lexicon.hpp"
#include "trace/absynth/types.hpp"
#include "trace/common/rng.hpp"

namespace trace::absynth {

/// Per-tier feedback multipliers clamp(target / max(observed, 1e-3), 0.5, 2).
/// All ones before any token has been recorded.
std::array<double, kNumTiers> tier_multipliers(const EntropyProfile& profile);

/// Realise one frame. Optional slots are kept with probability clamp(0.5 w_t, 0, 1);
/// tokens are drawn with weight w_t * unigram_prob * S(previous token, candidate).
SentenceRecord generate_sentence(const FrameSpec& frame, const Lexicon& lexicon,
                                 const EntropyProfile& profile, Rng& rng);
SentenceRecord generate_sentence(const FrameSpec& frame, const Lexicon& lexicon,
                                 const EntropyProfile& profile, std::uint64_t seed);

struct Corpus {
  CorpusConfig config;
  Lexicon lexicon;
  std::vector<FrameSpec> frames;
  std::vector<SentenceRecord> train, val, test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
  /// All records in generation order (train, val, test).
  std::vector<const SentenceRecord*> all() const;
};

/// Split sizes for n sentences: val and test rounded to nearest, remainder to train.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

Corpus generate_corpus(const CorpusConfig& cfg);

/// Stream variant used by the corpus generator; exposes the running profile
/// and the multipliers in force for each sentence.
class SentenceStream {
 public:
  SentenceStream(const Lexicon& lexicon, const std::vector<FrameSpec>& frames, const CorpusConfig& cfg);
  SentenceRecord next();
  const EntropyProfile& profile() const { return profile_; }

 private:
  const Lexicon& lexicon_;
  const std::vector<FrameSpec>& frames_;
  std::array<std::vector<int>, kNumComplexity> by_level_;
  std::array<double, kNumComplexity> mix_;
  EntropyProfile profile_;
  Rng rng_;
};

StatsReport corpus_stats(const Corpus& corpus);
StatsReport corpus_stats(const std::vector<const SentenceRecord*>& records, const Lexicon& lexicon);

/// Least-squares slope of log frequency on log rank over counts >= min_count, negated.
double zipf_fit_exponent(std::vector<std::int64_t> counts, std::int64_t min_count = 5);

}  // namespace trace::absynth
