#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trace::absynth {

// Lexical categories in the order of the vocabulary table.
enum class Pos : std::uint8_t {
  Noun,
  TransitiveVerb,
  IntransitiveVerb,
  CommunicationVerb,
  MotionVerb,
  Adj,
  Adv,
  Location,
  Temporal,
  Prep,
  Determiner,
  Conj,
  Result,
};
inline constexpr int kNumPos = 13;

// Frame-element roles. Probe labels are a coarser projection (see srl_label).
enum class Role : std::uint8_t {
  Agent,
  Patient,
  Theme,
  Action,
  Source,
  Goal,
  Location,
  Purpose,
  Time,
  Manner,
  Attribute,
  Specifier,
  Relation,
  Connector,
  Result,
  Recipient,
};
inline constexpr int kNumRoles = 16;

enum class SrlLabel : std::uint8_t { Agent, Patient, Action, Location, Relation, Connector, Result, Other };
inline constexpr int kNumSrl = 8;

enum class Tier : std::uint8_t { Low, Medium, High };
inline constexpr int kNumTiers = 3;

enum class Complexity : std::uint8_t { Simple, Medium, Complex };
inline constexpr int kNumComplexity = 3;

std::string_view to_string(Pos p);
std::string_view to_string(Role r);
std::string_view to_string(SrlLabel s);
std::string_view to_string(Tier t);
std::string_view to_string(Complexity c);
/// Prefix used to name tokens of a category ("noun", "verb", ...).
std::string_view token_prefix(Pos p);

// Parsers throw ConfigError on unknown names.
Pos parse_pos(std::string_view s);
Role parse_role(std::string_view s);
Tier parse_tier(std::string_view s);
Complexity parse_complexity(std::string_view s);

SrlLabel srl_label(Role r);

struct LexiconEntry {
  std::string token_name;
  Pos pos = Pos::Noun;
  int zipf_rank = 1;
  int cluster_id = 0;
  double unigram_prob = 0.0;
};

struct ZipfConfig {
  double alpha = 1.05;
  double noise_sigma = 0.05;
  int vocab_size = 9274;
};

struct ClusterConfig {
  int n_clusters = 20;
  std::array<double, 2> intra_base_range{0.4, 0.7};
  std::array<double, 2> cross_base_range{0.05, 0.2};
  void validate() const;
};

/// Category counts from the vocabulary table.
std::map<Pos, int> default_category_counts();

struct Slot {
  Role role = Role::Agent;
  Pos pos = Pos::Noun;
  Tier tier = Tier::Medium;
  bool optional = false;
};

struct FrameSpec {
  std::string frame_name;
  std::vector<Slot> slots;
  Complexity complexity = Complexity::Simple;
};

struct SentenceRecord {
  std::vector<std::string> tokens;
  std::vector<Pos> pos_tags;
  std::vector<Role> semantic_roles;
  std::vector<Tier> entropy_tiers;
  Complexity complexity = Complexity::Simple;
  std::string frame_name;

  std::size_t size() const { return tokens.size(); }
  std::string text() const;
};

struct EntropyProfile {
  std::array<std::int64_t, kNumTiers> counts{0, 0, 0};
  std::array<double, kNumTiers> target_fractions{0.35, 0.45, 0.20};

  std::int64_t total() const { return counts[0] + counts[1] + counts[2]; }
  /// Observed fractions; all zero before any token is recorded.
  std::array<double, kNumTiers> fractions() const;
  void add(const SentenceRecord& r);
};

struct CorpusConfig {
  int n_sentences = 25000;
  std::array<double, kNumComplexity> complexity_mix{0.55, 0.35, 0.10};
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::array<double, kNumTiers> tier_targets{0.35, 0.45, 0.20};
  std::uint64_t seed = 1;
  ZipfConfig zipf;
  ClusterConfig clusters;
  std::map<Pos, int> category_counts = default_category_counts();
  /// Frame inventory as JSON text; empty means the built-in inventory.
  std::string frames_json;
  void validate() const;
};

struct StatsReport {
  std::array<double, kNumComplexity> complexity_mix{};
  std::array<double, kNumTiers> tier_profile{};
  double zipf_fit_exponent = 0.0;
  std::map<Pos, int> lexicon_category_counts;
  std::map<Pos, std::int64_t> category_token_counts;
  int lexicon_size = 0;
  std::int64_t n_sentences = 0;
  std::int64_t n_tokens = 0;
};

}  // namespace trace::absynth
