#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trace/absynth/types.hpp"

namespace trace::absynth {

/// (1/rank^alpha + noise) / normaliser. The normaliser is the sum of the
/// perturbed weights over every rank (callers pass it precomputed).
double zipf_probability(int rank, const ZipfConfig& cfg, double noise, double normaliser);

/// Same, with the whole noise vector given (noise[i] belongs to rank i+1).
double zipf_probability(int rank, const ZipfConfig& cfg, std::span<const double> noise);

/// Perturbed, clamped weights 1/i^alpha + eps_i for ranks 1..V.
std::vector<double> zipf_weights(const ZipfConfig& cfg, std::uint64_t seed);

class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::vector<LexiconEntry> entries, ClusterConfig clusters, std::uint64_t seed);

  const std::vector<LexiconEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const LexiconEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// Index of a token name, or -1.
  int find(std::string_view name) const;
  /// Entry indices of one category, in naming order.
  const std::vector<int>& by_pos(Pos p) const { return by_pos_[static_cast<int>(p)]; }

  const ClusterConfig& clusters() const { return clusters_; }
  std::uint64_t seed() const { return seed_; }

  /// Canonical JSON-lines serialisation (one entry per line).
  std::string to_jsonl() const;
  static Lexicon from_jsonl(std::string_view text, ClusterConfig clusters, std::uint64_t seed);

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::vector<int>> by_pos_ = std::vector<std::vector<int>>(kNumPos);
  ClusterConfig clusters_;
  std::uint64_t seed_ = 0;
};

Lexicon build_lexicon(const ZipfConfig& zipf, const ClusterConfig& clusters,
                      const std::map<Pos, int>& category_counts, std::uint64_t seed);

/// S(a,b) = S_base(c_a,c_b) + U(0, S_range(c_a,c_b)); symmetric in (a,b).
double association_strength(const LexiconEntry& a, const LexiconEntry& b, const ClusterConfig& cfg,
                            std::uint64_t seed);

}  // namespace trace::absynth
