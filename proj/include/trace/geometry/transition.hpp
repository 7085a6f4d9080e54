#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace trace::geometry {

struct MetricSeries {
  std::vector<std::int64_t> steps;
  std::vector<double> values;
};

struct DetectorOptions {
  double half_life = 5.0;  // in checkpoints
  std::size_t min_points = 10;
  std::size_t window = 5;  // checkpoints summarised on each side of the event
};

struct TransitionEvent {
  std::int64_t step = 0;
  std::size_t index = 0;
  std::int64_t curvature_peak_step = 0;
  // means of the normalised smoothed series over `window` checkpoints before / from the event
  double curvature_pre = 0.0, curvature_post = 0.0;
  double id_pre = 0.0, id_post = 0.0;
};

/// Forward then backward EMA with the given half-life; zero phase lag.
std::vector<double> ema_smooth(std::span<const double> x, double half_life);

/// Maps to [0, 1]; a constant series maps to all zeros.
std::vector<double> minmax_normalise(std::span<const double> x);

/// First checkpoint strictly after the smoothed curvature's global maximum
/// (first occurrence) where normalised curvature <= normalised ID.
std::optional<TransitionEvent> detect_phase_transition(const MetricSeries& curvature, const MetricSeries& id,
                                                       const DetectorOptions& opt = {});

/// {"step": s, "method": "curvature-id-intersection", ...} or step null when none fired.
void write_transition_json(const std::filesystem::path& path, const std::optional<TransitionEvent>& ev);

}  // namespace trace::geometry
