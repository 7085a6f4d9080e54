#include "trace/geometry/transition.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"

namespace trace::geometry {

std::vector<double> ema_smooth(std::span<const double> x, double half_life) {
  if (!(half_life > 0.0)) throw ConfigError("EMA half-life must be positive");
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  const double a = 1.0 - std::exp2(-1.0 / half_life);
  for (std::size_t i = 1; i < y.size(); ++i) y[i] = a * y[i] + (1.0 - a) * y[i - 1];
  for (std::size_t i = y.size() - 1; i-- > 0;) y[i] = a * y[i] + (1.0 - a) * y[i + 1];
  return y;
}

std::vector<double> minmax_normalise(std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double a = *lo, range = *hi - *lo;
  for (auto& v : y) v = range > 0.0 ? (v - a) / range : 0.0;
  return y;
}

std::optional<TransitionEvent> detect_phase_transition(const MetricSeries& curv, const MetricSeries& id,
                                                       const DetectorOptions& opt) {
  if (curv.steps.size() != curv.values.size() || id.steps.size() != id.values.size())
    throw AlignmentError("series has mismatched steps and values");
  if (curv.steps != id.steps) throw AlignmentError("curvature and ID series are on different checkpoint grids");
  const std::size_t n = curv.steps.size();
  if (n < opt.min_points)
    throw AlignmentError("need at least " + std::to_string(opt.min_points) + " checkpoints, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(curv.values[i]) || !std::isfinite(id.values[i]))
      throw DomainError("non-finite value at step " + std::to_string(curv.steps[i]));

  const auto c = minmax_normalise(ema_smooth(curv.values, opt.half_life));
  const auto d = minmax_normalise(ema_smooth(id.values, opt.half_life));
  const auto peak = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
  for (std::size_t i = peak + 1; i < n; ++i) {
    if (!(c[i] <= d[i])) continue;
    TransitionEvent ev;
    ev.step = curv.steps[i];
    ev.index = i;
    ev.curvature_peak_step = curv.steps[peak];
    auto mean = [](const std::vector<double>& v, std::size_t lo, std::size_t hi) {
      if (hi <= lo) return std::nan("");
      double s = 0.0;
      for (std::size_t k = lo; k < hi; ++k) s += v[k];
      return s / static_cast<double>(hi - lo);
    };
    const std::size_t lo = i >= opt.window ? i - opt.window : 0, hi = std::min(n, i + opt.window);
    ev.curvature_pre = mean(c, lo, i);
    ev.curvature_post = mean(c, i, hi);
    ev.id_pre = mean(d, lo, i);
    ev.id_post = mean(d, i, hi);
    return ev;
  }
  return std::nullopt;
}

void write_transition_json(const fs::path& path, const std::optional<TransitionEvent>& ev) {
  nlohmann::ordered_json j;
  if (ev) {
    j["step"] = ev->step;
    j["method"] = "curvature-id-intersection";
    j["curvature_peak_step"] = ev->curvature_peak_step;
    j["window"] = {{"curvature_pre", ev->curvature_pre},
                   {"curvature_post", ev->curvature_post},
                   {"id_pre", ev->id_pre},
                   {"id_post", ev->id_post}};
  } else {
    j["step"] = nullptr;
    j["method"] = "curvature-id-intersection";
  }
  write_file(path, j.dump(2) + "\n");
}

}  // namespace trace::geometry
