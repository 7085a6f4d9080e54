#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace trace::curvature {

/// Writes H v into out. Must not be shared between concurrent evaluations.
using HvpOracle = std::function<void(std::span<const double> v, std::span<double> out)>;

struct Spectrum {
  std::vector<double> eigenvalues;  // descending
  int k_requested = 0;
  std::size_t n_params = 0;
  int lanczos_iters = 0;  // iterations actually run
  bool converged = false;
};

/// Top-k Ritz values of H after at most `iters` Lanczos steps with full
/// reorthogonalisation. Stops early once every top-k value moves < 1e-6
/// relative between successive steps. A breakdown (invariant subspace) restarts
/// from a fresh random vector orthogonal to the basis.
Spectrum lanczos_topk(const HvpOracle& hvp, std::size_t dim, int k, int iters, std::uint64_t seed,
                      double tol = 1e-6);

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal (off.size() == diag.size() - 1), by implicit QL.
std::vector<double> tridiagonal_eigenvalues(std::vector<double> diag, std::vector<double> off);

/// exp of the Shannon entropy (natural log) of the |lambda| shares.
double effective_rank(std::span<const double> eigenvalues);
double effective_rank(const Spectrum& s);

/// Signed sum of the retained eigenvalues.
double hessian_trace(std::span<const double> eigenvalues);
double hessian_trace(const Spectrum& s);

/// trace / sqrt(r_eff).
double curvature_complexity(double trace, double effective_rank);
double curvature_complexity(const Spectrum& s);

/// Hutchinson estimate of the full trace from Rademacher probes.
double hutchinson_trace(const HvpOracle& hvp, std::size_t dim, int probes, std::uint64_t seed);

}  // namespace trace::curvature
