#include "trace/absynth/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"

namespace trace::absynth {

double zipf_probability(int rank, const ZipfConfig& cfg, double noise, double normaliser) {
  if (rank < 1 || rank > cfg.vocab_size)
    throw DomainError("zipf rank " + std::to_string(rank) + " outside [1, " +
                      std::to_string(cfg.vocab_size) + "]");
  const double w = 1.0 / std::pow(static_cast<double>(rank), cfg.alpha) + noise;
  if (!(w > 0.0)) throw DomainError("non-positive perturbed zipf weight at rank " + std::to_string(rank));
  if (!(normaliser > 0.0)) throw DomainError("zipf normaliser must be positive");
  return w / normaliser;
}

double zipf_probability(int rank, const ZipfConfig& cfg, std::span<const double> noise) {
  if (noise.size() != static_cast<std::size_t>(cfg.vocab_size))
    throw DomainError("noise vector length must equal vocab_size");
  double z = 0.0;
  for (int j = 1; j <= cfg.vocab_size; ++j) {
    const double w = 1.0 / std::pow(static_cast<double>(j), cfg.alpha) + noise[j - 1];
    if (!(w > 0.0)) throw DomainError("non-positive perturbed zipf weight at rank " + std::to_string(j));
    z += w;
  }
  return zipf_probability(rank, cfg, noise[rank - 1], z);
}

std::vector<double> zipf_weights(const ZipfConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (!(cfg.alpha > 0.0)) throw ConfigError("zipf alpha must be > 0");
  if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("zipf noise_sigma must be >= 0");
  Rng rng = Rng::stream(seed, "zipf-noise");
  std::vector<double> w(static_cast<std::size_t>(cfg.vocab_size));
  for (int i = 1; i <= cfg.vocab_size; ++i) {
    const double base = 1.0 / std::pow(static_cast<double>(i), cfg.alpha);
    // noise scaled to the rank's own weight so the tail keeps its slope
    double x = base + cfg.noise_sigma * rng.normal() * base;
    if (!(x > 0.0)) x = base + cfg.noise_sigma * rng.normal() * base;
    if (!(x > 0.0)) x = 1e-6;
    w[static_cast<std::size_t>(i - 1)] = x;
  }
  return w;
}

Lexicon::Lexicon(std::vector<LexiconEntry> entries, ClusterConfig clusters, std::uint64_t seed)
    : entries_(std::move(entries)), clusters_(clusters), seed_(seed) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!index_.emplace(e.token_name, static_cast<int>(i)).second)
      throw ConfigError("duplicate token name " + e.token_name);
    by_pos_[static_cast<int>(e.pos)].push_back(static_cast<int>(i));
  }
}

int Lexicon::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

std::string Lexicon::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::ordered_json j;
    j["token"] = e.token_name;
    j["pos"] = std::string(to_string(e.pos));
    j["rank"] = e.zipf_rank;
    j["cluster"] = e.cluster_id;
    j["prob"] = e.unigram_prob;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Lexicon Lexicon::from_jsonl(std::string_view text, ClusterConfig clusters, std::uint64_t seed) {
  std::vector<LexiconEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LexiconEntry e;
      e.token_name = j.at("token").get<std::string>();
      e.pos = parse_pos(j.at("pos").get<std::string>());
      e.zipf_rank = j.at("rank").get<int>();
      e.cluster_id = j.at("cluster").get<int>();
      e.unigram_prob = j.at("prob").get<double>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("bad lexicon line: ") + ex.what());
    }
  }
  return Lexicon(std::move(entries), clusters, seed);
}

Lexicon build_lexicon(const ZipfConfig& zipf, const ClusterConfig& clusters,
                      const std::map<Pos, int>& category_counts, std::uint64_t seed) {
  clusters.validate();
  int total = 0;
  for (const auto& [pos, n] : category_counts) {
    if (n < 0) throw ConfigError("negative count for " + std::string(to_string(pos)));
    total += n;
  }
  if (total != zipf.vocab_size)
    throw ConfigError("category counts sum to " + std::to_string(total) + " but vocab_size is " +
                      std::to_string(zipf.vocab_size));

  const auto w = zipf_weights(zipf, seed);
  const double z = std::accumulate(w.begin(), w.end(), 0.0);

  std::vector<int> ranks(static_cast<std::size_t>(zipf.vocab_size));
  std::iota(ranks.begin(), ranks.end(), 1);
  Rng rng = Rng::stream(seed, "lexicon-ranks");
  rng.shuffle(ranks);

  std::vector<LexiconEntry> entries;
  entries.reserve(ranks.size());
  std::size_t cursor = 0;
  for (const auto& [pos, n] : category_counts) {
    std::vector<int> mine(ranks.begin() + static_cast<std::ptrdiff_t>(cursor),
                          ranks.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(n)));
    cursor += static_cast<std::size_t>(n);
    std::sort(mine.begin(), mine.end());
    for (int k = 0; k < n; ++k) {
      LexiconEntry e;
      e.token_name = std::string(token_prefix(pos)) + std::to_string(k + 1);
      e.pos = pos;
      e.zipf_rank = mine[static_cast<std::size_t>(k)];
      e.cluster_id = k % clusters.n_clusters;
      e.unigram_prob = w[static_cast<std::size_t>(e.zipf_rank - 1)] / z;
      entries.push_back(std::move(e));
    }
  }
  return Lexicon(std::move(entries), clusters, seed);
}

double association_strength(const LexiconEntry& a, const LexiconEntry& b, const ClusterConfig& cfg,
                            std::uint64_t seed) {
  const auto lo = static_cast<std::uint64_t>(std::min(a.zipf_rank, b.zipf_rank));
  const auto hi = static_cast<std::uint64_t>(std::max(a.zipf_rank, b.zipf_rank));
  const std::uint64_t h = mix_seed(mix_seed(seed ^ 0x5A17C0DEULL, lo), hi);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  const auto& r = a.cluster_id == b.cluster_id ? cfg.intra_base_range : cfg.cross_base_range;
  return r[0] + u * (r[1] - r[0]);
}

}  // namespace trace::absynth
