#include "trace/mi/mine.hpp"

#include <algorithm>
#include <cmath>

#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"

namespace trace::mi {

void MineConfig::validate() const {
  if (hidden.empty()) throw ConfigError("MINE critic needs at least one hidden layer");
  for (int w : hidden)
    if (w < 1) throw ConfigError("MINE hidden widths must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("MINE lr must be positive");
  if (steps < 1) throw ConfigError("MINE steps must be >= 1");
  if (batch_size < 2) throw ConfigError("MINE batch needs at least two pairs");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("MINE ema_decay must be in [0, 1)");
  if (!(clip > 0.0)) throw ConfigError("MINE clip must be positive");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ConfigError("MINE eval_fraction must be in (0, 1)");
}

void PairedSamples::check() const {
  if (n < 2) throw SampleSizeError("MINE needs at least two joint samples");
  if (dx < 1 || dz < 1) throw DataError("MINE sample widths must be positive");
  if (x.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(dx) ||
      z.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(dz))
    throw DataError("MINE samples do not match n x d");
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("MINE input is not finite");
  for (double v : z)
    if (!std::isfinite(v)) throw DataError("MINE input is not finite");
}

PairedSamples PairedSamples::rows(const std::vector<std::size_t>& idx) const {
  PairedSamples s;
  s.n = static_cast<int>(idx.size());
  s.dx = dx;
  s.dz = dz;
  for (auto i : idx) {
    s.x.insert(s.x.end(), x.begin() + static_cast<std::ptrdiff_t>(i * dx), x.begin() + static_cast<std::ptrdiff_t>((i + 1) * dx));
    s.z.insert(s.z.end(), z.begin() + static_cast<std::ptrdiff_t>(i * dz), z.begin() + static_cast<std::ptrdiff_t>((i + 1) * dz));
  }
  return s;
}

namespace {

// rows [x_i ; z_j] for the given index pairs
std::vector<double> concat(const PairedSamples& s, const std::vector<std::size_t>& xi, const std::vector<std::size_t>& zi) {
  const auto w = static_cast<std::size_t>(s.dx + s.dz);
  std::vector<double> out(xi.size() * w);
  for (std::size_t r = 0; r < xi.size(); ++r) {
    std::copy_n(s.x.begin() + static_cast<std::ptrdiff_t>(xi[r] * s.dx), s.dx, out.begin() + static_cast<std::ptrdiff_t>(r * w));
    std::copy_n(s.z.begin() + static_cast<std::ptrdiff_t>(zi[r] * s.dz), s.dz,
                out.begin() + static_cast<std::ptrdiff_t>(r * w + s.dx));
  }
  return out;
}

double clip_into(double t, double c, bool& flag) {
  if (std::abs(t) > c) {
    flag = true;
    return std::copysign(c, t);
  }
  return t;
}

}  // namespace

double dv_bound(const std::vector<double>& joint, const std::vector<double>& marg) {
  if (joint.empty() || marg.empty()) throw SampleSizeError("DV bound of an empty sample");
  double mj = 0.0;
  for (double t : joint) mj += t;
  mj /= static_cast<double>(joint.size());
  const double mx = *std::max_element(marg.begin(), marg.end());
  double s = 0.0;
  for (double t : marg) s += std::exp(t - mx);
  return mj - (mx + std::log(s / static_cast<double>(marg.size())));
}

std::vector<double> Critic::scores(const PairedSamples& s, const std::vector<std::size_t>& perm, bool& clipped_out) {
  if (s.dx != dx || s.dz != dz) throw DataError("critic input widths do not match the samples");
  std::vector<std::size_t> xi(static_cast<std::size_t>(s.n));
  for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = i;
  const auto in = concat(s, xi, perm.empty() ? xi : perm);
  const auto& t = net.forward(in.data(), s.n);
  std::vector<double> out(t.begin(), t.end());
  for (auto& v : out) v = clip_into(v, clip, clipped_out);
  return out;
}

Critic train_mine(const PairedSamples& joint, const MineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  joint.check();
  Critic c;
  c.dx = joint.dx;
  c.dz = joint.dz;
  c.clip = cfg.clip;
  std::vector<int> widths{joint.dx + joint.dz};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  c.net = kernel::Mlp<double>(widths);
  Rng init = Rng::stream(seed, "mine", 0);
  c.net.init(init);
  Rng draw = Rng::stream(seed, "mine", 1);

  kernel::AdamBuffer<double> adam;
  const auto B = static_cast<std::size_t>(std::min(cfg.batch_size, joint.n));
  std::vector<std::size_t> xi(B), zi(B);
  std::vector<double> gj, gm, grad(c.net.n_params()), dout(B);
  double ema = 0.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    for (auto& i : xi) i = draw.below(static_cast<std::uint64_t>(joint.n));
    const auto perm = draw.permutation(B);
    for (std::size_t r = 0; r < B; ++r) zi[r] = xi[perm[r]];

    // joint term: d/dtheta of -mean(T)
    const auto in_j = concat(joint, xi, xi);
    const auto& tj = c.net.forward(in_j.data(), static_cast<int>(B));
    double mean_j = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      mean_j += clip_into(tj[r], cfg.clip, c.clipped);
      dout[r] = std::abs(tj[r]) > cfg.clip ? 0.0 : -1.0 / static_cast<double>(B);
    }
    mean_j /= static_cast<double>(B);
    c.net.backward(dout.data(), gj);

    // marginal term: gradient of ln mean(e^T) with the mean replaced by a
    // bias-corrected moving average
    const auto in_m = concat(joint, xi, zi);
    const auto& tm = c.net.forward(in_m.data(), static_cast<int>(B));
    std::vector<double> tmc(B);
    for (std::size_t r = 0; r < B; ++r) tmc[r] = clip_into(tm[r], cfg.clip, c.clipped);
    double mean_e = 0.0;
    for (double t : tmc) mean_e += std::exp(t);
    mean_e /= static_cast<double>(B);
    ema = cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * mean_e;
    const double denom = ema / (1.0 - std::pow(cfg.ema_decay, step));
    for (std::size_t r = 0; r < B; ++r)
      dout[r] = std::abs(tm[r]) > cfg.clip ? 0.0 : std::exp(tmc[r]) / (static_cast<double>(B) * denom);
    c.net.backward(dout.data(), gm);

    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = gj[k] + gm[k];
    adam.step(c.net.params(), grad, cfg.lr);
    c.train_bound.push_back(mean_j - std::log(mean_e));
  }
  return c;
}

MiEstimate estimate_mi(Critic& critic, const PairedSamples& eval, std::uint64_t seed) {
  eval.check();
  MiEstimate e;
  e.clipped = critic.clipped;
  const auto perm = Rng::stream(seed, "mine", 2).permutation(static_cast<std::size_t>(eval.n));
  const auto tj = critic.scores(eval, {}, e.clipped);
  const auto tm = critic.scores(eval, perm, e.clipped);
  e.value = dv_bound(tj, tm);
  if (!std::isfinite(e.value)) throw NumericError("MINE estimate is not finite", 0);
  e.unbounded = e.clipped;
  return e;
}

MiEstimate mine(const PairedSamples& samples, const MineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  samples.check();
  const auto perm = Rng::stream(seed, "mine", 3).permutation(static_cast<std::size_t>(samples.n));
  auto n_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * samples.n));
  n_eval = std::clamp<std::size_t>(n_eval, 2, static_cast<std::size_t>(samples.n) - 2);
  const std::vector<std::size_t> ev(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_eval));
  const std::vector<std::size_t> tr(perm.begin() + static_cast<std::ptrdiff_t>(n_eval), perm.end());
  auto critic = train_mine(samples.rows(tr), cfg, seed);
  return estimate_mi(critic, samples.rows(ev), seed);
}

}  // namespace trace::mi
