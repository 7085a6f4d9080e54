#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "trace/kernel/model.hpp"
#include "trace/kernel/network.hpp"

namespace trace::geometry {

/// Row-major n x d cloud.
struct PointCloud {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> points;
  const double* row(std::size_t i) const { return points.data() + i * d; }
};

struct TwoNnResult {
  double id = 0.0;
  std::size_t n_used = 0;
  std::size_t duplicates_removed = 0;
};

/// Exact duplicate rows are dropped first.
PointCloud deduplicate(const PointCloud& cloud, std::size_t* removed = nullptr);

/// TWO-NN: 1 / mean ln(r2/r1) over the deduplicated cloud, Euclidean distances.
TwoNnResult twonn(const PointCloud& cloud);
double twonn_id(const PointCloud& cloud);

struct IdReport {
  std::int64_t step = 0;
  std::vector<double> per_layer;  // transformer layers only
  double embedding_id = std::numeric_limits<double>::quiet_NaN();
  double average = 0.0;
  std::size_t duplicates_removed = 0;  // summed over layers
};

/// Token positions that carry a word (BOS and padding excluded), flat b*T+t.
std::vector<std::size_t> word_positions(const kernel::Batch& batch);

/// Subsample of `n` positions without replacement (all of them if fewer).
std::vector<std::size_t> subsample_positions(const std::vector<std::size_t>& positions, std::size_t n, std::uint64_t seed);

/// ID of every transformer layer's token vectors at the given positions, plus
/// the embedding layer reported separately.
IdReport layer_ids(const kernel::ForwardTrace<float>& trace, const std::vector<std::size_t>& positions,
                   std::int64_t step);

/// Forward pass + position sampling + layer_ids in one go.
IdReport layer_ids(const kernel::ModelState& state, const kernel::Batch& feature_batch, std::size_t subsample,
                   std::uint64_t seed);

/// id.csv (step,layer,id; layer "emb" is the embedding) and id_avg.csv (step,avg_id).
void append_csv(const std::filesystem::path& dir, const IdReport& r);

}  // namespace trace::geometry
