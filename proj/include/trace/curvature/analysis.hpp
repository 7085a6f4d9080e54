#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>

#include "trace/curvature/spectrum.hpp"
#include "trace/kernel/model.hpp"

namespace trace::curvature {

struct CurvatureOptions {
  int k = 20;
  int iters = 0;  // 0 = 2k
  std::uint64_t seed = 0;
  int hutchinson_probes = 20;  // 0 skips the estimate
  void validate() const;
};

struct CurvatureReport {
  std::int64_t step = 0;
  double trace = 0.0;
  double effective_rank = 1.0;
  double complexity = 0.0;
  bool converged = false;
  int k = 0;
  double hutchinson = std::numeric_limits<double>::quiet_NaN();
  Spectrum spectrum;
};

CurvatureReport make_report(const Spectrum& s, std::int64_t step);

/// H v of the float64 training loss at the state's parameters on a fixed batch
/// (dropout off). Each oracle owns its own network.
HvpOracle model_hvp(const kernel::ModelState& state, const kernel::Batch& batch);

/// Lanczos top-k plus derived scalars (and Hutchinson when enabled) for one checkpoint.
CurvatureReport analyse(const kernel::ModelState& state, const kernel::Batch& batch, const CurvatureOptions& opt);

/// Appends to curvature.csv (step,trace,eff_rank,complexity,converged,k) and,
/// when present, the Hutchinson estimate to curvature_hutchinson.csv.
void append_csv(const std::filesystem::path& dir, const CurvatureReport& r, int hutchinson_probes);

}  // namespace trace::curvature
