#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trace/kernel/mlp.hpp"
#include "trace/kernel/model.hpp"

namespace trace::mi {

struct MineConfig {
  std::vector<int> hidden{128, 128};  // critic widths before the scalar output
  double lr = 1e-3;
  int steps = 200;
  int batch_size = 128;
  double ema_decay = 0.99;
  double clip = 50.0;               // |T| beyond this is clipped and flagged
  double eval_fraction = 0.5;       // held-out share for the reported bound
  void validate() const;
};

/// n paired rows: x [n x dx], z [n x dz].
struct PairedSamples {
  int n = 0, dx = 0, dz = 0;
  std::vector<double> x, z;
  void check() const;
  PairedSamples rows(const std::vector<std::size_t>& idx) const;
};

/// Statistics network T(x, z) on the concatenation [x; z].
struct Critic {
  kernel::Mlp<double> net;
  int dx = 0, dz = 0;
  double clip = 50.0;
  bool clipped = false;             // some |T| exceeded the clip during training
  std::vector<double> train_bound;  // DV bound of every training batch
  /// T on rows (x_i, z_perm[i]); perm empty means the joint pairing.
  std::vector<double> scores(const PairedSamples& s, const std::vector<std::size_t>& perm, bool& clipped_out);
};

struct MiEstimate {
  double value = 0.0;  // nats
  bool clipped = false;
  bool unbounded = false;
  std::string pair;
  std::int64_t step = 0;
};

/// Donsker-Varadhan bound E_P[T] - ln E_{PxP}[e^T] maximised with in-batch
/// shuffled negatives and a moving-average correction of the log-term gradient.
Critic train_mine(const PairedSamples& joint, const MineConfig& cfg, std::uint64_t seed);

/// DV bound of a trained critic on held-out pairs, negatives from a seeded shuffle.
MiEstimate estimate_mi(Critic& critic, const PairedSamples& eval, std::uint64_t seed);

/// Seeded train/eval split, fresh critic, held-out estimate.
MiEstimate mine(const PairedSamples& samples, const MineConfig& cfg, std::uint64_t seed);

/// DV bound of arbitrary scores: mean(joint) - ln mean(exp(marginal)).
double dv_bound(const std::vector<double>& joint, const std::vector<double>& marginal);

}  // namespace trace::mi
