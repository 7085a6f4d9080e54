#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"
#include "trace/curvature/analysis.hpp"
#include "trace/curvature/spectrum.hpp"
#include "trace/kernel/network.hpp"
#include "trace/kernel/optim.hpp"

using namespace trace;
using namespace trace::curvature;

namespace {

HvpOracle matrix_oracle(const Eigen::MatrixXd& m) {
  return [m](std::span<const double> v, std::span<double> out) {
    Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = m * x;
  };
}

std::vector<double> dense_top(const Eigen::MatrixXd& m, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), std::greater<>());
  ev.resize(static_cast<std::size_t>(k));
  return ev;
}

Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return (a + a.transpose()) / 2.0;
}

kernel::ModelConfig tiny_config() {
  kernel::ModelConfig c;
  c.preset = "tiny";
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.seq_len = 8;
  c.vocab_size = 12;
  c.dropout = 0.0;
  return c;
}

kernel::Batch tiny_batch() {
  std::vector<std::vector<std::int32_t>> seqs;
  Rng rng(77);
  for (int s = 0; s < 16; ++s) {
    std::vector<std::int32_t> q;
    const int n = 3 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) q.push_back(static_cast<std::int32_t>(2 + (s + 3 * i + static_cast<int>(rng.below(2))) % 10));
    seqs.push_back(q);
  }
  return kernel::make_batch(seqs, 8);
}

kernel::ModelState tiny_trained() {
  auto st = kernel::init_state(tiny_config(), 5);
  const auto b = tiny_batch();
  kernel::Network<float> net(st.config);
  std::vector<float> g(st.params.size());
  kernel::AdamHyper h;
  h.lr = 1e-2;
  h.warmup_steps = 0;
  for (int i = 0; i < 60; ++i) {
    net.loss_and_grad(st.params, b, g);
    kernel::adam_step(st, g, h);
  }
  return st;
}

// dense Hessian from central differences of the analytic gradient, column by column
Eigen::MatrixXd dense_hessian(const kernel::ModelState& st, const kernel::Batch& b) {
  const auto g = kernel::model_gradient_fn(st.config, b);
  const auto n = static_cast<Eigen::Index>(st.params.size());
  std::vector<double> theta(st.params.begin(), st.params.end()), gp(theta.size()), gm(theta.size());
  Eigen::MatrixXd H(n, n);
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto tp = theta, tm = theta;
    tp[static_cast<std::size_t>(i)] += h;
    tm[static_cast<std::size_t>(i)] -= h;
    g(tp, gp);
    g(tm, gm);
    for (Eigen::Index j = 0; j < n; ++j)
      H(j, i) = (gp[static_cast<std::size_t>(j)] - gm[static_cast<std::size_t>(j)]) / (2 * h);
  }
  return (H + H.transpose()) / 2.0;
}

}  // namespace

TEST_CASE("implicit QL matches a dense eigensolver") {
  Rng rng(3);
  for (int n : {1, 2, 3, 7, 25, 60}) {
    std::vector<double> d(static_cast<std::size_t>(n)), e(static_cast<std::size_t>(n - 1));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = d[static_cast<std::size_t>(i)] = rng.normal();
    for (int i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = e[static_cast<std::size_t>(i)] = rng.normal();
    const auto got = tridiagonal_eigenvalues(d, e);
    auto want = dense_top(m, n);
    std::reverse(want.begin(), want.end());
    for (int i = 0; i < n; ++i) CHECK(got[static_cast<std::size_t>(i)] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-10));
  }
  // a split tridiagonal (zero coupling) is just the union of its blocks
  const auto split = tridiagonal_eigenvalues({2.0, 5.0, -1.0}, {0.0, 0.0});
  CHECK(split == std::vector<double>{-1.0, 2.0, 5.0});
}

TEST_CASE("lanczos on diag(1..100)") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(100, 100);
  for (int i = 0; i < 100; ++i) d(i, i) = i + 1;
  const auto s = lanczos_topk(matrix_oracle(d), 100, 5, 100, 1);
  REQUIRE(s.eigenvalues.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(s.eigenvalues[static_cast<std::size_t>(i)] - (100 - i)) <= 1e-6 * (100 - i));
  CHECK(s.converged);
  CHECK(s.k_requested == 5);
  CHECK(s.n_params == 100);
}

TEST_CASE("lanczos on the identity restarts past breakdown") {
  const auto id = Eigen::MatrixXd::Identity(30, 30);
  const auto s = lanczos_topk(matrix_oracle(id), 30, 6, 12, 2);
  REQUIRE(s.eigenvalues.size() == 6);
  for (double x : s.eigenvalues) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lanczos with full iterations is exact on random symmetric matrices") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto m = random_symmetric(80, seed);
    const auto s = lanczos_topk(matrix_oracle(m), 80, 10, 80, seed);
    const auto want = dense_top(m, 10);
    REQUIRE(s.eigenvalues.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(s.eigenvalues[static_cast<std::size_t>(i)] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-9));
    CHECK(std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<>()));
  }
}

TEST_CASE("lanczos preconditions and non-finite oracle") {
  const auto id = Eigen::MatrixXd::Identity(10, 10);
  CHECK_THROWS_AS(lanczos_topk(matrix_oracle(id), 10, 5, 4, 1), DomainError);
  CHECK_THROWS_AS(lanczos_topk(matrix_oracle(id), 10, 5, 11, 1), DomainError);
  int calls = 0;
  HvpOracle bad = [&](std::span<const double> v, std::span<double> out) {
    std::copy(v.begin(), v.end(), out.begin());
    if (++calls == 3) out[4] = std::nan("");
  };
  try {
    lanczos_topk(bad, 10, 2, 8, 1);
    FAIL("expected a spectral error");
  } catch (const SpectralError& e) {
    CHECK(e.iteration() == 2);
  }
}

TEST_CASE("top-1 Ritz value is insensitive to the seed") {
  Eigen::MatrixXd m = random_symmetric(400, 9) * 0.1;
  for (int i = 0; i < 5; ++i) m(i, i) += 10.0 - i;  // well separated top of the spectrum
  std::vector<double> tops;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = lanczos_topk(matrix_oracle(m), 400, 3, 60, seed);
    CHECK(s.converged);
    tops.push_back(s.eigenvalues[0]);
  }
  const auto [lo, hi] = std::minmax_element(tops.begin(), tops.end());
  CHECK((*hi - *lo) / std::abs(*hi) < 1e-4);
}

TEST_CASE("tiny trained model: lanczos agrees with the dense finite-difference Hessian") {
  const auto st = tiny_trained();
  REQUIRE(st.params.size() <= 2000);
  const auto b = tiny_batch();
  const auto H = dense_hessian(st, b);
  const auto want = dense_top(H, 10);
  const auto s = lanczos_topk(model_hvp(st, b), st.params.size(), 10, 200, 4);
  REQUIRE(s.eigenvalues.size() == 10);
  for (int i = 0; i < 10; ++i)
    CHECK(std::abs(s.eigenvalues[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) <=
          1e-3 * std::abs(want[static_cast<std::size_t>(i)]));
  CHECK(std::abs(effective_rank(s) - effective_rank(want)) <= 1e-3 * effective_rank(want));
  CHECK(std::abs(curvature_complexity(s) - hessian_trace(want) / std::sqrt(effective_rank(want))) <=
        1e-3 * std::abs(hessian_trace(want) / std::sqrt(effective_rank(want))));
}

TEST_CASE("effective rank, trace and complexity examples") {
  const std::vector<double> four{1, 1, 1, 1}, point{5, 0, 0}, two{3, 1}, sym{-2, 2};
  CHECK(effective_rank(four) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(effective_rank(point) == 1.0);
  // p = {0.75, 0.25}
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  CHECK(effective_rank(two) == doctest::Approx(std::exp(h)).epsilon(1e-14));
  CHECK(effective_rank(two) == doctest::Approx(1.7548).epsilon(1e-4));
  CHECK_THROWS_AS(effective_rank(std::vector<double>{0, 0}), DomainError);
  CHECK(hessian_trace(four) == 4.0);
  CHECK(hessian_trace(sym) == 0.0);
  CHECK(hessian_trace(two) == 4.0);
  CHECK(curvature_complexity(4.0, 4.0) == 2.0);
  CHECK(curvature_complexity(hessian_trace(two), effective_rank(two)) == doctest::Approx(3.0196).epsilon(1e-4));
  CHECK(curvature_complexity(hessian_trace(sym), effective_rank(sym)) == 0.0);
  CHECK_THROWS_AS(curvature_complexity(1.0, 0.5), DomainError);
}

TEST_CASE("spectral scalars: scale equivariance and rank bounds") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(20));
    std::vector<double> ev(static_cast<std::size_t>(k));
    for (auto& x : ev) x = rng.normal() * std::pow(10.0, rng.uniform(-3, 3));
    const double c = std::pow(10.0, rng.uniform(-4, 4));
    std::vector<double> scaled = ev;
    for (auto& x : scaled) x *= c;
    const double r = effective_rank(ev);
    CHECK(r >= 1.0 - 1e-12);
    CHECK(r <= k + 1e-9);
    CHECK(effective_rank(scaled) == doctest::Approx(r).epsilon(1e-10));
    CHECK(hessian_trace(scaled) == doctest::Approx(c * hessian_trace(ev)).epsilon(1e-10));
    CHECK(curvature_complexity(hessian_trace(scaled), effective_rank(scaled)) ==
          doctest::Approx(c * curvature_complexity(hessian_trace(ev), r)).epsilon(1e-10));
  }
}

TEST_CASE("hutchinson is exact on diagonal operators") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(50, 50);
  for (int i = 0; i < 50; ++i) d(i, i) = 0.5 * i - 3;
  CHECK(hutchinson_trace(matrix_oracle(d), 50, 3, 1) == doctest::Approx(d.trace()).epsilon(1e-12));
  // unbiased on a dense operator: mean over many probes approaches the trace
  const auto m = random_symmetric(40, 4);
  CHECK(hutchinson_trace(matrix_oracle(m), 40, 4000, 2) == doctest::Approx(m.trace()).epsilon(0.05).scale(10));
}

TEST_CASE("analyse a model checkpoint") {
  const auto st = tiny_trained();
  CurvatureOptions opt;
  opt.k = 5;
  opt.seed = 3;
  opt.hutchinson_probes = 4;
  const auto r = analyse(st, tiny_batch(), opt);
  CHECK(r.k == 5);
  CHECK(r.step == st.step);
  CHECK(r.spectrum.lanczos_iters <= 10);
  CHECK(r.effective_rank >= 1.0);
  CHECK(r.effective_rank <= 5.0);
  CHECK(r.complexity == r.trace / std::sqrt(r.effective_rank));
  CHECK(std::isfinite(r.hutchinson));
  const auto again = analyse(st, tiny_batch(), opt);
  CHECK(again.spectrum.eigenvalues == r.spectrum.eigenvalues);
}
