#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "trace/absynth/types.hpp"

namespace trace::absynth {

/// Built-in inventory: four frames per complexity level, as JSON text.
std::string_view default_frames_json();

/// Parse a frame inventory. Slots are written "ROLE=POS/tier", with a
/// trailing '?' for optional slots. Every frame is validated.
std::vector<FrameSpec> parse_frames(std::string_view json_text);
std::string frames_to_json(const std::vector<FrameSpec>& frames);

std::vector<FrameSpec> default_frames();

/// True when `next` may follow `prev` in a sentence. `prev` empty = sentence start.
bool pos_transition_allowed(const Pos* prev, Pos next);
bool pos_may_end(Pos last);

/// Throws ConfigError unless every realisation of the frame (each subset of
/// optional slots) is a grammatical POS sequence of length 1..16 containing a verb.
void validate_frame(const FrameSpec& frame);

/// Check a concrete POS sequence against the same grammar.
bool is_grammatical(const std::vector<Pos>& seq);

inline constexpr int kMaxSentenceLength = 16;

}  // namespace trace::absynth
