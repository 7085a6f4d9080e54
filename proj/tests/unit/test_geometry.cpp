#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/common/rng.hpp"
#include "trace/geometry/transition.hpp"
#include "trace/geometry/twonn.hpp"

using namespace trace;
using namespace trace::geometry;

namespace {

Eigen::MatrixXd random_rotation(int D, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ();
}

// n points of an m-dim manifold sample, embedded in D dims by a random rotation
PointCloud embed(const Eigen::MatrixXd& low, int D, std::uint64_t seed) {
  const auto n = low.rows();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, D);
  full.leftCols(low.cols()) = low;
  const Eigen::MatrixXd rotated = full * random_rotation(D, seed).transpose();
  PointCloud c;
  c.n = static_cast<std::size_t>(n);
  c.d = static_cast<std::size_t>(D);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < D; ++k) c.points.push_back(rotated(i, k));
  return c;
}

Eigen::MatrixXd cube(int n, int m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, m);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) x(i, k) = rng.uniform();
  return x;
}

MetricSeries series(const std::vector<double>& v) {
  MetricSeries s;
  for (std::size_t i = 0; i < v.size(); ++i) s.steps.push_back(static_cast<std::int64_t>(i) * 500);
  s.values = v;
  return s;
}

}  // namespace

TEST_CASE("TWO-NN hand case on a line") {
  PointCloud c{3, 1, {0.0, 1.0, 3.0}};
  // ratios 3, 2, 1.5
  CHECK(std::abs(twonn_id(c) - 3.0 / std::log(9.0)) <= 1e-12);
  CHECK(twonn_id(c) == doctest::Approx(1.3654).epsilon(1e-4));
}

TEST_CASE("TWO-NN sampling oracles: circle and rotated cubes") {
  Rng rng(11);
  Eigen::MatrixXd circle(1000, 2);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0.0, 2.0 * M_PI);
    circle(i, 0) = std::cos(t);
    circle(i, 1) = std::sin(t);
  }
  const double id_circle = twonn_id(embed(circle, 64, 1));
  CHECK(std::abs(id_circle - 1.0) <= 0.1);

  const double id5 = twonn_id(embed(cube(2000, 5, 2), 64, 3));
  CHECK(std::abs(id5 - 5.0) <= 0.5);

  double prev = 0.0;
  for (int m : {1, 2, 5, 10}) {
    const double id = twonn_id(embed(cube(2000, m, 10 + static_cast<std::uint64_t>(m)), 64, 4));
    CHECK(id > prev);
    prev = id;
  }
}

TEST_CASE("TWO-NN invariance to isometries and scaling") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto base = embed(cube(300, 3, seed), 16, seed);
    const double id = twonn_id(base);
    Rng rng(seed + 100);
    const auto R = random_rotation(16, seed + 7);
    const double scale = std::pow(10.0, rng.uniform(-3, 3));
    Eigen::VectorXd shift(16);
    for (int k = 0; k < 16; ++k) shift(k) = rng.normal() * 5;
    PointCloud moved = base;
    for (std::size_t i = 0; i < base.n; ++i) {
      Eigen::Map<const Eigen::VectorXd> x(base.row(i), 16);
      const Eigen::VectorXd y = scale * (R * x) + shift;
      for (int k = 0; k < 16; ++k) moved.points[i * 16 + static_cast<std::size_t>(k)] = y(k);
    }
    CHECK(std::abs(twonn_id(moved) - id) <= 1e-9 * id);
  }
}

TEST_CASE("TWO-NN deduplication and errors") {
  PointCloud c{5, 1, {0.0, 1.0, 1.0, 3.0, 0.0}};
  const auto r = twonn(c);
  CHECK(r.duplicates_removed == 2);
  CHECK(r.n_used == 3);
  CHECK(std::abs(r.id - 3.0 / std::log(9.0)) <= 1e-12);
  CHECK_THROWS_AS(twonn(PointCloud{2, 1, {0.0, 1.0}}), SampleSizeError);
  CHECK_THROWS_AS(twonn(PointCloud{4, 2, {1, 1, 1, 1, 1, 1, 1, 1}}), SampleSizeError);
  CHECK_THROWS_AS(twonn(PointCloud{3, 2, {1, 1}}), DataError);
}

TEST_CASE("layer IDs on a model trace") {
  kernel::ModelConfig cfg;
  cfg.preset = "large";
  cfg.n_layers = 3;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_ffn = 64;
  cfg.vocab_size = 60;
  const auto st = kernel::init_state(cfg, 3);
  Rng rng(5);
  std::vector<std::vector<std::int32_t>> seqs;
  for (int s = 0; s < 120; ++s) {
    std::vector<std::int32_t> q;
    const int n = 3 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) q.push_back(2 + static_cast<std::int32_t>(rng.below(58)));
    seqs.push_back(q);
  }
  const auto batch = kernel::make_feature_batch(seqs, 16);
  const auto pos = word_positions(batch);
  CHECK(pos.size() == static_cast<std::size_t>(std::accumulate(seqs.begin(), seqs.end(), 0, [](int a, const auto& q) {
          return a + static_cast<int>(q.size());
        })));
  const auto sub = subsample_positions(pos, 300, 9);
  CHECK(sub.size() == 300);
  CHECK(std::set<std::size_t>(sub.begin(), sub.end()).size() == 300);
  CHECK(subsample_positions(pos, 300, 9) == sub);

  const auto r = layer_ids(st, batch, 300, 9);
  REQUIRE(r.per_layer.size() == 3);
  const double mean = (r.per_layer[0] + r.per_layer[1] + r.per_layer[2]) / 3.0;
  CHECK(std::abs(r.average - mean) <= 1e-12);
  CHECK(std::isfinite(r.embedding_id));
  for (double x : r.per_layer) CHECK(x > 0.0);

  kernel::ForwardTrace<float> same;
  same.B = 1;
  same.T = 10;
  same.d_model = 4;
  same.hidden.assign(2, std::vector<float>(40, 0.5f));
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  CHECK_THROWS_AS(layer_ids(same, all, 0), SampleSizeError);
}

TEST_CASE("EMA smoothing and normalisation") {
  const std::vector<double> flat(12, 3.5);
  for (double v : ema_smooth(flat, 5.0)) CHECK(v == doctest::Approx(3.5).epsilon(1e-15));
  const auto n = minmax_normalise(std::vector<double>{2, 4, 3});
  CHECK(n == std::vector<double>{0.0, 1.0, 0.5});
  CHECK(minmax_normalise(flat) == std::vector<double>(12, 0.0));
  CHECK_THROWS_AS(ema_smooth(flat, 0.0), ConfigError);
}

TEST_CASE("phase-transition detector examples") {
  std::vector<double> fall, rise;
  for (int i = 0; i <= 10; ++i) {
    fall.push_back(1.0 - 0.09 * i);
    rise.push_back(0.1 + 0.09 * i);
  }
  const auto ev = detect_phase_transition(series(fall), series(rise));
  REQUIRE(ev.has_value());
  CHECK(ev->index == 5);
  CHECK(ev->step == 2500);
  CHECK(ev->curvature_peak_step == 0);
  CHECK(ev->curvature_pre > ev->curvature_post);
  CHECK(ev->id_pre < ev->id_post);

  std::vector<double> up, low(11, 0.05);
  for (int i = 0; i <= 10; ++i) up.push_back(0.1 * (i + 1));
  CHECK_FALSE(detect_phase_transition(series(up), series(low)).has_value());

  const std::vector<double> same(11, 0.7);
  const auto tie = detect_phase_transition(series(same), series(same));
  REQUIRE(tie.has_value());
  CHECK(tie->index == 1);
  CHECK(tie->step == 500);
}

TEST_CASE("detector preconditions") {
  const std::vector<double> v(10, 1.0);
  auto a = series(v), b = series(v);
  b.steps[3] += 1;
  CHECK_THROWS_AS(detect_phase_transition(a, b), AlignmentError);
  CHECK_THROWS_AS(detect_phase_transition(series(std::vector<double>(9, 1.0)), series(std::vector<double>(9, 1.0))),
                  AlignmentError);
  auto bad = series(v);
  bad.values[2] = std::nan("");
  CHECK_THROWS_AS(detect_phase_transition(bad, series(v)), DomainError);
}

TEST_CASE("detector is invariant to positive affine rescaling") {
  Rng rng(4);
  int fired = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 10 + rng.below(30);
    std::vector<double> c(n), d(n);
    double cw = 0, dw = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cw += rng.normal();
      dw += rng.normal();
      c[i] = cw;
      d[i] = dw;
    }
    const auto base = detect_phase_transition(series(c), series(d));
    const double a1 = std::pow(10.0, rng.uniform(-2, 2)), b1 = rng.normal() * 100;
    const double a2 = std::pow(10.0, rng.uniform(-2, 2)), b2 = rng.normal() * 100;
    std::vector<double> c2(c), d2(d);
    for (auto& x : c2) x = a1 * x + b1;
    for (auto& x : d2) x = a2 * x + b2;
    const auto moved = detect_phase_transition(series(c2), series(d2));
    REQUIRE(base.has_value() == moved.has_value());
    if (base) {
      ++fired;
      CHECK(base->step == moved->step);
      CHECK(base->index > 0);
      CHECK(base->index < n);
    }
  }
  CHECK(fired > 0);
}

TEST_CASE("transition and ID csv output") {
  const auto dir = fs::temp_directory_path() / "trace_geometry_test";
  fs::remove_all(dir);
  write_transition_json(dir / "transition.json", TransitionEvent{1500, 3, 0, 0.9, 0.1, 0.2, 0.8});
  auto j = nlohmann::json::parse(read_file(dir / "transition.json"));
  CHECK(j["step"] == 1500);
  CHECK(j["method"] == "curvature-id-intersection");
  write_transition_json(dir / "none.json", std::nullopt);
  CHECK(nlohmann::json::parse(read_file(dir / "none.json"))["step"].is_null());

  IdReport r;
  r.step = 500;
  r.per_layer = {3.0, 4.0};
  r.embedding_id = 2.0;
  r.average = 3.5;
  append_csv(dir, r);
  r.step = 1000;
  append_csv(dir, r);
  const auto t = read_csv(dir / "id.csv");
  CHECK(t.header == std::vector<std::string>{"step", "layer", "id"});
  CHECK(t.rows.size() == 6);
  CHECK(t.rows[0] == std::vector<std::string>{"500", "emb", "2"});
  CHECK(t.rows[2] == std::vector<std::string>{"500", "1", "4"});
  CHECK(read_csv(dir / "id_avg.csv").rows.size() == 2);
  fs::remove_all(dir);
}
