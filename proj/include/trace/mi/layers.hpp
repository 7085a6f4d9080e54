#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trace/kernel/model.hpp"
#include "trace/mi/mine.hpp"

namespace trace::mi {

/// Mean-pooled per-sequence vectors over word positions: "X" is the raw token
/// embedding (no scaling or positions), "emb" the embedding output, then the
/// output of every layer.
struct PooledReps {
  int n = 0;
  std::vector<std::string> names;            // X, emb, L0, L1, ...
  std::vector<std::vector<double>> vectors;  // per name, n x width
  std::vector<int> widths;
  const std::vector<double>& at(const std::string& name) const;
};

PooledReps pooled_representations(const kernel::ModelState& state, const std::vector<std::vector<std::int32_t>>& seqs);

/// Pairs measured per checkpoint: emb->L0, adjacent layers, then X against emb
/// and every layer (7 for a three-layer model).
std::vector<std::pair<std::string, std::string>> mi_pairs(int n_layers);

/// One fresh critic per pair; seeds derive from (seed, pair, step).
std::vector<MiEstimate> layer_mi(const kernel::ModelState& state, const std::vector<std::vector<std::int32_t>>& seqs,
                                 const MineConfig& cfg, std::uint64_t seed);

/// Appends to mi.csv (step,pair,estimate_nats,seed) and mi_flags.csv for clipped critics.
void append_csv(const std::filesystem::path& dir, const std::vector<MiEstimate>& estimates, std::uint64_t seed);

}  // namespace trace::mi
