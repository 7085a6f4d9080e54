#include "trace/geometry/twonn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/common/rng.hpp"

namespace trace::geometry {

PointCloud deduplicate(const PointCloud& c, std::size_t* removed) {
  if (c.points.size() != c.n * c.d) throw DataError("point cloud size does not match n x d");
  std::vector<std::size_t> idx(c.n);
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(c.row(a), c.row(a) + c.d, c.row(b), c.row(b) + c.d);
  };
  auto equal = [&](std::size_t a, std::size_t b) { return std::equal(c.row(a), c.row(a) + c.d, c.row(b)); };
  std::stable_sort(idx.begin(), idx.end(), less);
  std::vector<bool> keep(c.n, false);
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (i == 0 || !equal(idx[i - 1], idx[i])) keep[idx[i]] = true;
  PointCloud out;
  out.d = c.d;
  for (std::size_t i = 0; i < c.n; ++i)
    if (keep[i]) {
      out.points.insert(out.points.end(), c.row(i), c.row(i) + c.d);
      ++out.n;
    }
  if (removed) *removed = c.n - out.n;
  return out;
}

TwoNnResult twonn(const PointCloud& cloud) {
  TwoNnResult res;
  const PointCloud c = deduplicate(cloud, &res.duplicates_removed);
  if (c.n < 3)
    throw SampleSizeError("TWO-NN needs at least 3 distinct points, got " + std::to_string(c.n));
  std::vector<double> r1(c.n, std::numeric_limits<double>::infinity()), r2(r1);
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = i + 1; j < c.n; ++j) {
      const double* a = c.row(i);
      const double* b = c.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < c.d; ++k) {
        const double t = a[k] - b[k];
        s += t * t;
      }
      for (std::size_t p : {i, j}) {
        if (s < r1[p]) {
          r2[p] = r1[p];
          r1[p] = s;
        } else if (s < r2[p]) {
          r2[p] = s;
        }
      }
    }
  double mean = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) {
    if (!(r1[i] > 0.0)) throw InternalError("zero nearest-neighbour distance after deduplication");
    mean += 0.5 * std::log(r2[i] / r1[i]);  // squared distances
  }
  mean /= static_cast<double>(c.n);
  if (!(mean > 0.0)) throw InternalError("degenerate TWO-NN ratios");
  res.id = 1.0 / mean;
  res.n_used = c.n;
  return res;
}

double twonn_id(const PointCloud& cloud) { return twonn(cloud).id; }

std::vector<std::size_t> word_positions(const kernel::Batch& b) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < b.inputs.size(); ++r)
    if (b.inputs[r] >= kernel::kFirstWordId) out.push_back(r);
  return out;
}

std::vector<std::size_t> subsample_positions(const std::vector<std::size_t>& pos, std::size_t n, std::uint64_t seed) {
  if (pos.size() <= n) return pos;
  Rng rng = Rng::stream(seed, "id-subsample");
  auto perm = rng.permutation(pos.size());
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  std::vector<std::size_t> out;
  out.reserve(n);
  for (auto i : perm) out.push_back(pos[i]);
  return out;
}

namespace {

PointCloud gather(const std::vector<float>& h, std::size_t d, const std::vector<std::size_t>& positions) {
  PointCloud c;
  c.n = positions.size();
  c.d = d;
  c.points.reserve(c.n * d);
  for (auto p : positions) {
    if ((p + 1) * d > h.size()) throw DataError("position outside the captured trace");
    c.points.insert(c.points.end(), h.begin() + static_cast<std::ptrdiff_t>(p * d),
                    h.begin() + static_cast<std::ptrdiff_t>((p + 1) * d));
  }
  return c;
}

}  // namespace

IdReport layer_ids(const kernel::ForwardTrace<float>& trace, const std::vector<std::size_t>& positions,
                   std::int64_t step) {
  if (trace.hidden.size() < 2) throw DataError("trace has no captured transformer layers");
  if (positions.size() < 3)
    throw SampleSizeError("need at least 3 token vectors, got " + std::to_string(positions.size()));
  const auto d = static_cast<std::size_t>(trace.d_model);
  IdReport r;
  r.step = step;
  const auto emb = twonn(gather(trace.hidden[0], d, positions));
  r.embedding_id = emb.id;
  for (std::size_t l = 1; l < trace.hidden.size(); ++l) {
    const auto t = twonn(gather(trace.hidden[l], d, positions));
    r.per_layer.push_back(t.id);
    r.duplicates_removed += t.duplicates_removed;
  }
  r.average = std::accumulate(r.per_layer.begin(), r.per_layer.end(), 0.0) / static_cast<double>(r.per_layer.size());
  return r;
}

IdReport layer_ids(const kernel::ModelState& state, const kernel::Batch& batch, std::size_t subsample,
                   std::uint64_t seed) {
  kernel::Network<float> net(state.config);
  const auto trace = net.forward(state.params, batch, true, false);
  return layer_ids(trace, subsample_positions(word_positions(batch), subsample, seed), state.step);
}

void append_csv(const fs::path& dir, const IdReport& r) {
  CsvAppender ids(dir / "id.csv", "step,layer,id");
  if (std::isfinite(r.embedding_id)) ids.row(r.step, "emb", r.embedding_id);
  for (std::size_t l = 0; l < r.per_layer.size(); ++l) ids.row(r.step, std::to_string(l), r.per_layer[l]);
  CsvAppender(dir / "id_avg.csv", "step,avg_id").row(r.step, r.average);
}

}  // namespace trace::geometry
