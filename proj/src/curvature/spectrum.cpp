#include "trace/curvature/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"

namespace trace::curvature {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void check_finite(std::span<const double> w, int iteration) {
  for (double x : w)
    if (!std::isfinite(x)) throw SpectralError("Hessian-vector product is not finite", iteration);
}

// two passes of classical Gram-Schmidt against the stored basis
void reorthogonalise(const std::vector<std::vector<double>>& basis, std::span<double> w) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) axpy(-dot(q, w), q, w);
}

std::vector<double> top_k(const std::vector<double>& alpha, const std::vector<double>& beta, int k) {
  auto ev = tridiagonal_eigenvalues(alpha, beta);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  if (static_cast<int>(ev.size()) > k) ev.resize(static_cast<std::size_t>(k));
  return ev;
}

}  // namespace

std::vector<double> tridiagonal_eigenvalues(std::vector<double> d, std::vector<double> e) {
  const int n = static_cast<int>(d.size());
  if (n == 0) return d;
  if (static_cast<int>(e.size()) != n - 1) throw DomainError("off-diagonal must have n-1 entries");
  e.push_back(0.0);
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (++iter > 60) throw InternalError("implicit QL did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end());
  return d;
}

Spectrum lanczos_topk(const HvpOracle& hvp, std::size_t dim, int k, int iters, std::uint64_t seed, double tol) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (iters < k || static_cast<std::size_t>(iters) > dim)
    throw DomainError("need k <= iters <= dim (k=" + std::to_string(k) + ", iters=" + std::to_string(iters) +
                      ", dim=" + std::to_string(dim) + ")");
  Rng rng = Rng::stream(seed, "lanczos");
  auto random_unit = [&](const std::vector<std::vector<double>>& basis) {
    std::vector<double> v(dim);
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (auto& x : v) x = rng.normal();
      reorthogonalise(basis, v);
      const double n = std::sqrt(dot(v, v));
      if (n > 1e-8) {
        for (auto& x : v) x /= n;
        return v;
      }
    }
    throw InternalError("could not draw a vector outside the Krylov basis");
  };

  Spectrum out;
  out.k_requested = k;
  out.n_params = dim;
  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;
  std::vector<double> w(dim), prev;
  basis.push_back(random_unit(basis));
  double scale = 0.0;
  for (int j = 0; j < iters; ++j) {
    const auto& q = basis.back();
    hvp(q, w);
    check_finite(w, j);
    const double a = dot(q, w);
    alpha.push_back(a);
    axpy(-a, q, w);
    if (j > 0) axpy(-beta.back(), basis[basis.size() - 2], w);
    reorthogonalise(basis, w);
    const double b = std::sqrt(dot(w, w));
    scale = std::max({scale, std::abs(a), b});
    out.lanczos_iters = j + 1;

    auto cur = top_k(alpha, beta, k);
    if (static_cast<int>(prev.size()) == k && static_cast<int>(cur.size()) == k) {
      out.converged = true;
      for (int i = 0; i < k; ++i) {
        const double ref = std::max(std::abs(cur[static_cast<std::size_t>(i)]), 1e-12 * scale);
        if (std::abs(cur[static_cast<std::size_t>(i)] - prev[static_cast<std::size_t>(i)]) >= tol * ref)
          out.converged = false;
      }
    }
    prev = std::move(cur);
    if (j + 1 == iters || basis.size() == dim) break;

    if (b <= 1e-10 * std::max(scale, 1e-300)) {
      beta.push_back(0.0);
      basis.push_back(random_unit(basis));
    } else {
      beta.push_back(b);
      for (auto& x : w) x /= b;
      basis.push_back(w);
    }
  }
  out.eigenvalues = std::move(prev);
  out.converged = out.converged || basis.size() == dim;
  return out;
}

double effective_rank(std::span<const double> ev) {
  double total = 0.0;
  for (double x : ev) total += std::abs(x);
  if (!(total > 0.0)) throw DomainError("effective rank of an all-zero spectrum");
  double h = 0.0;
  for (double x : ev) {
    const double p = std::abs(x) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::exp(h);
}

double effective_rank(const Spectrum& s) { return effective_rank(s.eigenvalues); }

double hessian_trace(std::span<const double> ev) { return std::accumulate(ev.begin(), ev.end(), 0.0); }
double hessian_trace(const Spectrum& s) { return hessian_trace(s.eigenvalues); }

double curvature_complexity(double trace, double r_eff) {
  if (!(r_eff >= 1.0)) throw DomainError("effective rank must be >= 1");
  return trace / std::sqrt(r_eff);
}

double curvature_complexity(const Spectrum& s) {
  return curvature_complexity(hessian_trace(s), effective_rank(s));
}

double hutchinson_trace(const HvpOracle& hvp, std::size_t dim, int probes, std::uint64_t seed) {
  if (probes < 1) throw DomainError("Hutchinson needs at least one probe");
  Rng rng = Rng::stream(seed, "hutchinson");
  std::vector<double> z(dim), hz(dim);
  double sum = 0.0;
  for (int p = 0; p < probes; ++p) {
    for (auto& x : z) x = rng.below(2) ? 1.0 : -1.0;
    hvp(z, hz);
    check_finite(hz, p);
    sum += dot(z, hz);
  }
  return sum / probes;
}

}  // namespace trace::curvature
