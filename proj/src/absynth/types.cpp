#include "trace/absynth/types.hpp"

#include <cmath>

#include "trace/common/error.hpp"

namespace trace::absynth {

namespace {

constexpr std::array<std::string_view, kNumPos> kPosNames{
    "NOUN", "TRANSITIVE_VERB", "INTRANSITIVE_VERB", "COMMUNICATION_VERB", "MOTION_VERB",
    "ADJ",  "ADV",             "LOCATION",          "TEMPORAL",           "PREP",
    "DETERMINER", "CONJ",      "RESULT"};

constexpr std::array<std::string_view, kNumPos> kPrefixes{
    "noun", "verb", "iverb", "cverb", "mverb", "adj", "adv",
    "location", "temporal", "prep", "det", "conj", "result"};

constexpr std::array<std::string_view, kNumRoles> kRoleNames{
    "AGENT",   "PATIENT", "THEME",     "ACTION",    "SOURCE",   "GOAL",
    "LOCATION", "PURPOSE", "TIME",     "MANNER",    "ATTRIBUTE", "SPECIFIER",
    "RELATION", "CONNECTOR", "RESULT", "RECIPIENT"};

constexpr std::array<std::string_view, kNumSrl> kSrlNames{
    "AGENT", "PATIENT", "ACTION", "LOCATION", "RELATION", "CONNECTOR", "RESULT", "OTHER"};

constexpr std::array<std::string_view, kNumTiers> kTierNames{"low", "medium", "high"};
constexpr std::array<std::string_view, kNumComplexity> kComplexityNames{"simple", "medium", "complex"};

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Pos p) { return kPosNames[static_cast<int>(p)]; }
std::string_view to_string(Role r) { return kRoleNames[static_cast<int>(r)]; }
std::string_view to_string(SrlLabel s) { return kSrlNames[static_cast<int>(s)]; }
std::string_view to_string(Tier t) { return kTierNames[static_cast<int>(t)]; }
std::string_view to_string(Complexity c) { return kComplexityNames[static_cast<int>(c)]; }
std::string_view token_prefix(Pos p) { return kPrefixes[static_cast<int>(p)]; }

Pos parse_pos(std::string_view s) { return parse_enum<Pos>(s, kPosNames, "POS category"); }
Role parse_role(std::string_view s) { return parse_enum<Role>(s, kRoleNames, "semantic role"); }
Tier parse_tier(std::string_view s) { return parse_enum<Tier>(s, kTierNames, "entropy tier"); }
Complexity parse_complexity(std::string_view s) {
  return parse_enum<Complexity>(s, kComplexityNames, "complexity level");
}

SrlLabel srl_label(Role r) {
  switch (r) {
    case Role::Agent: return SrlLabel::Agent;
    case Role::Patient:
    case Role::Theme:
    case Role::Recipient: return SrlLabel::Patient;
    case Role::Action: return SrlLabel::Action;
    case Role::Location:
    case Role::Source:
    case Role::Goal: return SrlLabel::Location;
    case Role::Relation: return SrlLabel::Relation;
    case Role::Connector: return SrlLabel::Connector;
    case Role::Result: return SrlLabel::Result;
    default: return SrlLabel::Other;
  }
}

void ClusterConfig::validate() const {
  if (n_clusters < 1) throw ConfigError("n_clusters must be >= 1");
  for (const auto* r : {&intra_base_range, &cross_base_range}) {
    if ((*r)[0] < 0.0 || (*r)[1] > 1.0 || (*r)[0] > (*r)[1])
      throw ConfigError("cluster association ranges must be ordered subsets of [0,1]");
  }
  if (intra_base_range[0] <= cross_base_range[1])
    throw ConfigError("intra-cluster lower bound must exceed cross-cluster upper bound");
}

std::map<Pos, int> default_category_counts() {
  return {{Pos::Noun, 2780},     {Pos::TransitiveVerb, 694},   {Pos::IntransitiveVerb, 694},
          {Pos::CommunicationVerb, 347}, {Pos::MotionVerb, 347}, {Pos::Adj, 1388},
          {Pos::Adv, 555},       {Pos::Location, 694},         {Pos::Temporal, 694},
          {Pos::Prep, 416},      {Pos::Determiner, 111},       {Pos::Conj, 277},
          {Pos::Result, 277}};
}

std::string SentenceRecord::text() const {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::array<double, kNumTiers> EntropyProfile::fractions() const {
  std::array<double, kNumTiers> f{0, 0, 0};
  const auto n = total();
  if (n == 0) return f;
  for (int t = 0; t < kNumTiers; ++t) f[t] = static_cast<double>(counts[t]) / static_cast<double>(n);
  return f;
}

void EntropyProfile::add(const SentenceRecord& r) {
  for (Tier t : r.entropy_tiers) ++counts[static_cast<int>(t)];
}

void CorpusConfig::validate() const {
  if (n_sentences < 10) throw ConfigError("n_sentences must be >= 10");
  auto check_simplex = [](const auto& a, const char* what) {
    double s = 0.0;
    for (double x : a) {
      if (!(x >= 0.0)) throw ConfigError(std::string(what) + " has a negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(what) + " must sum to 1");
  };
  check_simplex(complexity_mix, "complexity_mix");
  check_simplex(split_fractions, "split_fractions");
  check_simplex(tier_targets, "tier_targets");
  if (!(zipf.alpha > 0.0)) throw ConfigError("zipf alpha must be > 0");
  if (!(zipf.noise_sigma >= 0.0)) throw ConfigError("zipf noise_sigma must be >= 0");
  clusters.validate();
}

}  // namespace trace::absynth
