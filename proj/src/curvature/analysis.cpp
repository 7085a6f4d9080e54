#include "trace/curvature/analysis.hpp"

#include <cmath>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/kernel/optim.hpp"

namespace trace::curvature {

void CurvatureOptions::validate() const {
  if (k < 1) throw ConfigError("curvature k must be >= 1");
  if (iters != 0 && iters < k) throw ConfigError("curvature iters must be >= k");
  if (hutchinson_probes < 0) throw ConfigError("hutchinson_probes must be >= 0");
}

CurvatureReport make_report(const Spectrum& s, std::int64_t step) {
  CurvatureReport r;
  r.step = step;
  r.spectrum = s;
  r.trace = hessian_trace(s);
  r.effective_rank = effective_rank(s);
  r.complexity = curvature_complexity(r.trace, r.effective_rank);
  r.converged = s.converged;
  r.k = s.k_requested;
  return r;
}

HvpOracle model_hvp(const kernel::ModelState& state, const kernel::Batch& batch) {
  auto grad = kernel::model_gradient_fn(state.config, batch);
  std::vector<double> theta(state.params.begin(), state.params.end());
  return [grad = std::move(grad), theta = std::move(theta)](std::span<const double> v, std::span<double> out) {
    const auto hv = kernel::hvp(grad, theta, v);
    std::copy(hv.begin(), hv.end(), out.begin());
  };
}

CurvatureReport analyse(const kernel::ModelState& state, const kernel::Batch& batch, const CurvatureOptions& opt) {
  opt.validate();
  const auto hvp = model_hvp(state, batch);
  const std::size_t n = state.params.size();
  const int iters = std::min<std::size_t>(static_cast<std::size_t>(opt.iters ? opt.iters : 2 * opt.k), n);
  auto r = make_report(lanczos_topk(hvp, n, std::min(opt.k, iters), iters, opt.seed), state.step);
  if (opt.hutchinson_probes > 0) r.hutchinson = hutchinson_trace(hvp, n, opt.hutchinson_probes, opt.seed);
  return r;
}

void append_csv(const fs::path& dir, const CurvatureReport& r, int hutchinson_probes) {
  CsvAppender(dir / "curvature.csv", "step,trace,eff_rank,complexity,converged,k")
      .row(r.step, r.trace, r.effective_rank, r.complexity, r.converged ? 1 : 0, r.k);
  if (std::isfinite(r.hutchinson))
    CsvAppender(dir / "curvature_hutchinson.csv", "step,trace_estimate,probes").row(r.step, r.hutchinson, hutchinson_probes);
}

}  // namespace trace::curvature
