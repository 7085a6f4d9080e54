#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "trace/absynth/generator.hpp"

namespace trace::absynth {

std::string record_to_json(const SentenceRecord& r);
SentenceRecord record_from_json(std::string_view line);

nlohmann::ordered_json config_to_json(const CorpusConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
CorpusConfig config_from_json(const nlohmann::json& j);

nlohmann::ordered_json stats_to_json(const StatsReport& s);

/// Layout: train.jsonl, val.jsonl, test.jsonl, lexicon.jsonl, frames.json,
/// meta.json (config), stats.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
/// Reload a corpus directory. Every record is checked against the lexicon.
Corpus load_corpus(const std::filesystem::path& dir);

/// Records must carry parallel annotations consistent with the lexicon.
void check_record(const SentenceRecord& r, const Lexicon& lexicon);

}  // namespace trace::absynth
