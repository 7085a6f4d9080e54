#include "trace/absynth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "trace/absynth/frames.hpp"
#include "trace/common/error.hpp"

namespace trace::absynth {

std::array<double, kNumTiers> tier_multipliers(const EntropyProfile& profile) {
  std::array<double, kNumTiers> w{1.0, 1.0, 1.0};
  if (profile.total() == 0) return w;
  const auto obs = profile.fractions();
  for (int t = 0; t < kNumTiers; ++t)
    w[t] = std::clamp(profile.target_fractions[t] / std::max(obs[t], 1e-3), 0.5, 2.0);
  return w;
}

SentenceRecord generate_sentence(const FrameSpec& frame, const Lexicon& lexicon,
                                 const EntropyProfile& profile, Rng& rng) {
  const auto mult = tier_multipliers(profile);
  SentenceRecord rec;
  rec.complexity = frame.complexity;
  rec.frame_name = frame.frame_name;
  std::vector<double> weights;
  int prev = -1;
  for (std::size_t i = 0; i < frame.slots.size(); ++i) {
    const Slot& slot = frame.slots[i];
    const double wt = mult[static_cast<int>(slot.tier)];
    if (slot.optional && !(rng.uniform() < std::clamp(0.5 * wt, 0.0, 1.0))) continue;
    const auto& cands = lexicon.by_pos(slot.pos);
    if (cands.empty())
      throw GenerationError("frame " + frame.frame_name + " slot " + std::to_string(i) + " (" +
                            std::string(to_string(slot.role)) + "=" + std::string(to_string(slot.pos)) +
                            ") has no candidate tokens");
    weights.resize(cands.size());
    double total = 0.0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const auto& e = lexicon[static_cast<std::size_t>(cands[c])];
      double w = wt * e.unigram_prob;
      if (prev >= 0)
        w *= association_strength(lexicon[static_cast<std::size_t>(prev)], e, lexicon.clusters(),
                                  lexicon.seed());
      weights[c] = w;
      total += w;
    }
    if (!(total > 0.0))
      throw GenerationError("frame " + frame.frame_name + " slot " + std::to_string(i) +
                            " has zero total sampling weight");
    const int pick = cands[rng.categorical(weights, total)];
    const auto& e = lexicon[static_cast<std::size_t>(pick)];
    rec.tokens.push_back(e.token_name);
    rec.pos_tags.push_back(e.pos);
    rec.semantic_roles.push_back(slot.role);
    rec.entropy_tiers.push_back(slot.tier);
    prev = pick;
  }
  return rec;
}

SentenceRecord generate_sentence(const FrameSpec& frame, const Lexicon& lexicon,
                                 const EntropyProfile& profile, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "sentence");
  return generate_sentence(frame, lexicon, profile, rng);
}

std::vector<const SentenceRecord*> Corpus::all() const {
  std::vector<const SentenceRecord*> out;
  out.reserve(size());
  for (const auto* split : {&train, &val, &test})
    for (const auto& r : *split) out.push_back(&r);
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  const auto nv = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  const auto nt = static_cast<std::size_t>(std::llround(fractions[2] * static_cast<double>(n)));
  if (nv + nt > n) throw ConfigError("split fractions leave no room for training data");
  return {n - nv - nt, nv, nt};
}

SentenceStream::SentenceStream(const Lexicon& lexicon, const std::vector<FrameSpec>& frames,
                               const CorpusConfig& cfg)
    : lexicon_(lexicon), frames_(frames), mix_(cfg.complexity_mix), rng_(Rng::stream(cfg.seed, "corpus")) {
  profile_.target_fractions = cfg.tier_targets;
  for (std::size_t i = 0; i < frames_.size(); ++i)
    by_level_[static_cast<int>(frames_[i].complexity)].push_back(static_cast<int>(i));
  for (int c = 0; c < kNumComplexity; ++c)
    if (mix_[c] > 0.0 && by_level_[c].empty())
      throw ConfigError("no frames for complexity level " + std::string(to_string(static_cast<Complexity>(c))));
}

SentenceRecord SentenceStream::next() {
  const auto level = rng_.categorical(mix_, 1.0);
  const auto& pool = by_level_[level];
  const auto mult = tier_multipliers(profile_);
  std::vector<double> fw(pool.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double w = 1.0;
    for (const auto& s : frames_[static_cast<std::size_t>(pool[i])].slots)
      if (!s.optional) w *= mult[static_cast<int>(s.tier)];
    fw[i] = w;
    total += w;
  }
  const auto& frame = frames_[static_cast<std::size_t>(pool[rng_.categorical(fw, total)])];
  SentenceRecord rec = generate_sentence(frame, lexicon_, profile_, rng_);
  profile_.add(rec);
  return rec;
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  ZipfConfig zipf = cfg.zipf;
  corpus.lexicon = build_lexicon(zipf, cfg.clusters, cfg.category_counts, cfg.seed);
  corpus.frames = cfg.frames_json.empty() ? default_frames() : parse_frames(cfg.frames_json);

  SentenceStream stream(corpus.lexicon, corpus.frames, cfg);
  const auto sizes = split_sizes(static_cast<std::size_t>(cfg.n_sentences), cfg.split_fractions);
  corpus.train.reserve(sizes[0]);
  for (std::size_t i = 0; i < sizes[0]; ++i) corpus.train.push_back(stream.next());
  for (std::size_t i = 0; i < sizes[1]; ++i) corpus.val.push_back(stream.next());
  for (std::size_t i = 0; i < sizes[2]; ++i) corpus.test.push_back(stream.next());
  return corpus;
}

double zipf_fit_exponent(std::vector<std::int64_t> counts, std::int64_t min_count) {
  std::sort(counts.begin(), counts.end(), std::greater<>());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size() && counts[i] >= min_count; ++i) {
    const double x = std::log(static_cast<double>(i + 1));
    const double y = std::log(static_cast<double>(counts[i]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return 0.0;
  const double dn = static_cast<double>(n);
  const double den = dn * sxx - sx * sx;
  if (den == 0.0) return 0.0;
  return -(dn * sxy - sx * sy) / den;
}

StatsReport corpus_stats(const std::vector<const SentenceRecord*>& records, const Lexicon& lexicon) {
  if (records.empty()) throw DataError("corpus_stats needs a non-empty corpus");
  StatsReport r;
  r.n_sentences = static_cast<std::int64_t>(records.size());
  r.lexicon_size = static_cast<int>(lexicon.size());
  for (int p = 0; p < kNumPos; ++p) {
    r.lexicon_category_counts[static_cast<Pos>(p)] = static_cast<int>(lexicon.by_pos(static_cast<Pos>(p)).size());
    r.category_token_counts[static_cast<Pos>(p)] = 0;
  }
  std::array<std::int64_t, kNumComplexity> levels{};
  EntropyProfile prof;
  std::vector<std::int64_t> freq(lexicon.size(), 0);
  for (const auto* rec : records) {
    ++levels[static_cast<int>(rec->complexity)];
    prof.add(*rec);
    for (std::size_t i = 0; i < rec->tokens.size(); ++i) {
      ++r.category_token_counts[rec->pos_tags[i]];
      const int idx = lexicon.find(rec->tokens[i]);
      if (idx < 0) throw DataError("token " + rec->tokens[i] + " not in lexicon");
      ++freq[static_cast<std::size_t>(idx)];
      ++r.n_tokens;
    }
  }
  for (int c = 0; c < kNumComplexity; ++c)
    r.complexity_mix[c] = static_cast<double>(levels[c]) / static_cast<double>(records.size());
  r.tier_profile = prof.fractions();
  r.zipf_fit_exponent = zipf_fit_exponent(std::move(freq));
  return r;
}

StatsReport corpus_stats(const Corpus& corpus) { return corpus_stats(corpus.all(), corpus.lexicon); }

}  // namespace trace::absynth
