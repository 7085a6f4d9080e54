#include "trace/absynth/frames.hpp"

#include <bitset>

#include "json.hpp"
#include "trace/common/error.hpp"

namespace trace::absynth {

namespace {

constexpr std::string_view kDefaultFrames = R"([
  {"name": "TRANSFER", "complexity": "simple",
   "slots": ["AGENT=NOUN/high", "ACTION=TRANSITIVE_VERB/medium", "THEME=NOUN/medium"]},
  {"name": "ARRIVAL", "complexity": "simple",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=MOTION_VERB/medium",
             "RELATION=PREP/low", "GOAL=LOCATION/high"]},
  {"name": "STATEMENT", "complexity": "simple",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=COMMUNICATION_VERB/medium",
             "SPECIFIER=DETERMINER/low", "PATIENT=NOUN/medium", "MANNER=ADV/high?"]},
  {"name": "OCCURRENCE", "complexity": "simple",
   "slots": ["SPECIFIER=DETERMINER/low", "ATTRIBUTE=ADJ/high?", "THEME=NOUN/medium",
             "ACTION=INTRANSITIVE_VERB/medium", "TIME=TEMPORAL/high?"]},

  {"name": "CREATION", "complexity": "medium",
   "slots": ["AGENT=NOUN/high", "ACTION=TRANSITIVE_VERB/medium", "THEME=NOUN/medium",
             "RELATION=PREP/low", "PURPOSE=NOUN/medium"]},
  {"name": "CHANGE", "complexity": "medium",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=TRANSITIVE_VERB/medium",
             "SPECIFIER=DETERMINER/low", "ATTRIBUTE=ADJ/high?", "PATIENT=NOUN/medium",
             "RESULT=RESULT/high"]},
  {"name": "PLACEMENT", "complexity": "medium",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=TRANSITIVE_VERB/medium",
             "SPECIFIER=DETERMINER/low", "THEME=NOUN/medium", "RELATION=PREP/low",
             "LOCATION=LOCATION/high", "TIME=TEMPORAL/high?"]},
  {"name": "COMMUNICATION", "complexity": "medium",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=COMMUNICATION_VERB/medium",
             "RELATION=PREP/low", "SPECIFIER=DETERMINER/low", "RECIPIENT=NOUN/medium",
             "MANNER=ADV/high?"]},

  {"name": "MOTION", "complexity": "complex",
   "slots": ["AGENT=NOUN/high", "RELATION=CONJ/low", "ACTION=MOTION_VERB/medium",
             "SOURCE=NOUN/medium", "ACTION=MOTION_VERB/medium", "GOAL=NOUN/medium"]},
  {"name": "COMMERCE", "complexity": "complex",
   "slots": ["SPECIFIER=DETERMINER/low", "ATTRIBUTE=ADJ/high?", "AGENT=NOUN/medium",
             "ACTION=TRANSITIVE_VERB/medium", "SPECIFIER=DETERMINER/low", "THEME=NOUN/medium",
             "CONNECTOR=CONJ/low", "ACTION=TRANSITIVE_VERB/medium", "SPECIFIER=DETERMINER/low",
             "PATIENT=NOUN/medium", "RELATION=PREP/low", "LOCATION=LOCATION/high",
             "TIME=TEMPORAL/high?"]},
  {"name": "CAUSATION", "complexity": "complex",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=TRANSITIVE_VERB/medium",
             "SPECIFIER=DETERMINER/low", "PATIENT=NOUN/medium", "CONNECTOR=CONJ/low",
             "RESULT=RESULT/high", "RELATION=PREP/low", "TIME=TEMPORAL/high"]},
  {"name": "NARRATION", "complexity": "complex",
   "slots": ["SPECIFIER=DETERMINER/low", "AGENT=NOUN/medium", "ACTION=COMMUNICATION_VERB/medium",
             "CONNECTOR=CONJ/low", "SPECIFIER=DETERMINER/low", "THEME=NOUN/medium",
             "ACTION=INTRANSITIVE_VERB/medium", "MANNER=ADV/high?", "RELATION=PREP/low",
             "LOCATION=LOCATION/high"]}
])";

using PosSet = std::bitset<kNumPos>;

PosSet set_of(std::initializer_list<Pos> ps) {
  PosSet s;
  for (Pos p : ps) s.set(static_cast<int>(p));
  return s;
}

// Successor sets of the regular frame grammar.
const PosSet& successors(const Pos* prev) {
  using P = Pos;
  static const PosSet start = set_of({P::Determiner, P::Adj, P::Noun});
  static const std::array<PosSet, kNumPos> next = [] {
    std::array<PosSet, kNumPos> n{};
    const PosSet nominal = set_of({P::Determiner, P::Adj, P::Noun});
    auto at = [&](P p) -> PosSet& { return n[static_cast<int>(p)]; };
    at(P::Noun) = set_of({P::TransitiveVerb, P::IntransitiveVerb, P::CommunicationVerb, P::MotionVerb,
                          P::Conj, P::Prep, P::Result, P::Adv, P::Temporal});
    at(P::TransitiveVerb) = nominal;
    at(P::IntransitiveVerb) = set_of({P::Adv, P::Prep, P::Temporal, P::Conj});
    at(P::CommunicationVerb) = nominal | set_of({P::Prep, P::Conj});
    at(P::MotionVerb) = set_of({P::Prep, P::Noun, P::Determiner, P::Location, P::Adv});
    at(P::Adj) = set_of({P::Adj, P::Noun});
    at(P::Adv) = set_of({P::Prep, P::Temporal, P::Conj});
    at(P::Location) = set_of({P::Conj, P::Temporal, P::Adv, P::Prep});
    at(P::Temporal) = set_of({P::Conj});
    at(P::Prep) = nominal | set_of({P::Location, P::Temporal});
    at(P::Determiner) = set_of({P::Adj, P::Noun});
    at(P::Conj) = nominal | set_of({P::TransitiveVerb, P::IntransitiveVerb, P::CommunicationVerb,
                                    P::MotionVerb, P::Result});
    at(P::Result) = set_of({P::Prep, P::Temporal, P::Conj});
    return n;
  }();
  return prev ? next[static_cast<int>(*prev)] : start;
}

bool is_verb(Pos p) {
  return p == Pos::TransitiveVerb || p == Pos::IntransitiveVerb || p == Pos::CommunicationVerb ||
         p == Pos::MotionVerb;
}

Slot parse_slot(const std::string& s) {
  const auto eq = s.find('=');
  const auto slash = s.find('/');
  if (eq == std::string::npos || slash == std::string::npos || slash < eq)
    throw ConfigError("bad slot '" + s + "', expected ROLE=POS/tier");
  Slot slot;
  slot.role = parse_role(s.substr(0, eq));
  slot.pos = parse_pos(s.substr(eq + 1, slash - eq - 1));
  std::string tier = s.substr(slash + 1);
  if (!tier.empty() && tier.back() == '?') {
    slot.optional = true;
    tier.pop_back();
  }
  slot.tier = parse_tier(tier);
  return slot;
}

}  // namespace

std::string_view default_frames_json() { return kDefaultFrames; }

bool pos_transition_allowed(const Pos* prev, Pos next) {
  return successors(prev).test(static_cast<int>(next));
}

bool pos_may_end(Pos last) {
  static const PosSet enders =
      set_of({Pos::Noun, Pos::IntransitiveVerb, Pos::MotionVerb, Pos::Location, Pos::Temporal,
              Pos::Adv, Pos::Result});
  return enders.test(static_cast<int>(last));
}

bool is_grammatical(const std::vector<Pos>& seq) {
  if (seq.empty() || seq.size() > static_cast<std::size_t>(kMaxSentenceLength)) return false;
  bool verb = false;
  const Pos* prev = nullptr;
  for (const Pos& p : seq) {
    if (!pos_transition_allowed(prev, p)) return false;
    verb = verb || is_verb(p);
    prev = &p;
  }
  return verb && pos_may_end(seq.back());
}

void validate_frame(const FrameSpec& frame) {
  const std::string name = frame.frame_name.empty() ? "<unnamed>" : frame.frame_name;
  if (frame.slots.empty()) throw ConfigError("frame " + name + " has no slots");
  // Track every POS the previous realised token may have (bit kNumPos = sentence start)
  // and the min/max realised length.
  std::bitset<kNumPos + 1> prev;
  prev.set(kNumPos);
  int min_len = 0, max_len = 0;
  bool verb = false;
  for (std::size_t i = 0; i < frame.slots.size(); ++i) {
    const Slot& s = frame.slots[i];
    for (int p = 0; p <= kNumPos; ++p) {
      if (!prev.test(p)) continue;
      const Pos pp = static_cast<Pos>(p);
      if (!pos_transition_allowed(p == kNumPos ? nullptr : &pp, s.pos))
        throw ConfigError("frame " + name + ": slot " + std::to_string(i) + " (" +
                          std::string(to_string(s.pos)) + ") cannot follow " +
                          (p == kNumPos ? std::string("sentence start") : std::string(to_string(pp))));
    }
    if (s.optional) {
      prev.set(static_cast<int>(s.pos));
    } else {
      prev.reset();
      prev.set(static_cast<int>(s.pos));
      ++min_len;
      verb = verb || is_verb(s.pos);
    }
    ++max_len;
  }
  if (prev.test(kNumPos)) throw ConfigError("frame " + name + " can realise an empty sentence");
  for (int p = 0; p < kNumPos; ++p)
    if (prev.test(p) && !pos_may_end(static_cast<Pos>(p)))
      throw ConfigError("frame " + name + " may end on " + std::string(to_string(static_cast<Pos>(p))));
  if (!verb) throw ConfigError("frame " + name + " has no obligatory verb");
  if (max_len > kMaxSentenceLength)
    throw ConfigError("frame " + name + " can exceed " + std::to_string(kMaxSentenceLength) + " tokens");
  (void)min_len;
}

std::vector<FrameSpec> parse_frames(std::string_view json_text) {
  std::vector<FrameSpec> frames;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_array()) throw ConfigError("frame inventory must be a JSON array");
    for (const auto& f : j) {
      FrameSpec spec;
      spec.frame_name = f.at("name").get<std::string>();
      spec.complexity = parse_complexity(f.at("complexity").get<std::string>());
      for (const auto& s : f.at("slots")) spec.slots.push_back(parse_slot(s.get<std::string>()));
      validate_frame(spec);
      frames.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad frame inventory: ") + e.what());
  }
  if (frames.empty()) throw ConfigError("frame inventory is empty");
  return frames;
}

std::string frames_to_json(const std::vector<FrameSpec>& frames) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& f : frames) {
    nlohmann::ordered_json j;
    j["name"] = f.frame_name;
    j["complexity"] = std::string(to_string(f.complexity));
    auto slots = nlohmann::ordered_json::array();
    for (const auto& s : f.slots) {
      std::string t = std::string(to_string(s.role)) + "=" + std::string(to_string(s.pos)) + "/" +
                      std::string(to_string(s.tier));
      if (s.optional) t += '?';
      slots.push_back(t);
    }
    j["slots"] = slots;
    arr.push_back(j);
  }
  return arr.dump(2);
}

std::vector<FrameSpec> default_frames() { return parse_frames(kDefaultFrames); }

}  // namespace trace::absynth
