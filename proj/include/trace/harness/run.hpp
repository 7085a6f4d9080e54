#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trace/absynth/generator.hpp"
#include "trace/harness/config.hpp"

namespace trace::harness {

inline constexpr const char* kToolVersion = "0.1.0";

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string status = "pending";  // pending | complete | failed
  std::string error;
  std::string stop_reason;
  std::int64_t final_step = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kToolVersion;
  std::string status = "running";  // running | complete | partial
  nlohmann::ordered_json config;
  std::vector<SeedOutcome> seeds;
  std::map<std::string, double> phase_seconds;
  std::map<std::string, std::string> artifacts;  // path relative to the run dir -> checksum

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& run_dir);
};

/// Files that are missing or whose checksum changed.
std::vector<std::string> verify_manifest(const RunManifest& m, const std::filesystem::path& run_dir);

enum class RunMode { Fresh, Resume, Force };

/// Test hook called after every checkpoint's diagnostics are on disk.
struct RunHooks {
  std::function<void(std::uint64_t seed, std::int64_t step)> after_checkpoint;
};

/// Corpus named by the config: loaded from corpus_dir, or generated and cached
/// under <out>/corpus.
absynth::Corpus prepare_corpus(const ExperimentConfig& cfg);

/// Trains every seed with diagnostics at each checkpoint, then writes
/// seed-averaged *_mean.csv files and the manifest. A run directory that
/// already holds a manifest is refused in Fresh mode; Resume continues
/// unfinished seeds from their last checkpoint; Force starts over.
RunManifest run_experiment(const ExperimentConfig& cfg, RunMode mode, const RunHooks& hooks = {});

/// One seed into `dir`; resumes from dir/progress.json when present.
SeedOutcome run_seed(const ExperimentConfig& cfg, const absynth::Corpus& corpus, std::uint64_t seed,
                     const std::filesystem::path& dir, std::map<std::string, double>& phase_seconds,
                     const RunHooks& hooks = {});

/// Per-key mean and sample std of the value columns over seed files; only keys
/// present in every file are kept. Columns: keys..., metric, mean, std, n.
void write_mean_csv(const std::vector<std::filesystem::path>& files, const std::vector<std::string>& keys,
                    const std::vector<std::string>& values, const std::filesystem::path& out);

/// Seed averages of every metric stream present in all seed directories.
void write_seed_means(const std::filesystem::path& run_dir, const std::vector<std::uint64_t>& seeds);

std::string seed_dir_name(std::uint64_t seed);

}  // namespace trace::harness
