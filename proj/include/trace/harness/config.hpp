#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "trace/absynth/generator.hpp"
#include "trace/mi/mine.hpp"
#include "trace/probing/probe.hpp"
#include "trace/transformer/train.hpp"

namespace trace::harness {

struct Diagnostics {
  bool curvature = true;
  bool id = true;
  bool probes = false;
  bool mi = false;
  int probe_every = 2500;     // steps; probes run when this divides the checkpoint step
  int curvature_sentences = 64;
  int lanczos_k = 20;
  int lanczos_iters = 40;
  int hutchinson_probes = 0;  // 0 skips the trace cross-check
  int id_sentences = 300;
  int id_subsample = 1000;
  int mi_sentences = 512;
  mi::MineConfig mine;
  int probe_sentences = 0;    // validation sentences for probe states; 0 = all
  probing::ProbeConfig probe;
  void validate() const;
};

struct ExperimentConfig {
  absynth::CorpusConfig corpus;
  std::string corpus_dir;  // load this corpus instead of generating one
  std::string preset = "small";
  std::string ablation = "none";  // none | no_ffn | single_head
  transformer::Schedule schedule;
  Diagnostics diagnostics;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out = "runs/default";

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Hash of everything that affects results (the output directory is excluded).
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace trace::harness
