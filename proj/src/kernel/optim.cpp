#include "trace/kernel/optim.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "trace/common/error.hpp"

namespace trace::kernel {

namespace {

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

GradientResult loss_and_grad(const ModelState& state, const Batch& batch) {
  Network<double> net(state.config);
  const auto theta = to_double(state.params);
  GradientResult r;
  r.grad.assign(theta.size(), 0.0);
  RunOptions opt;
  opt.step = state.step;
  r.loss = net.loss_and_grad(theta, batch, r.grad, opt).loss;
  return r;
}

std::vector<double> hvp(const GradientFn& g, std::span<const double> theta, std::span<const double> v) {
  if (theta.size() != v.size()) throw DataError("hvp direction has the wrong length");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(v.size(), 0.0);
  if (norm == 0.0) return out;
  const double eps = 1e-3 / std::max(1.0, norm);
  std::vector<double> tp(theta.begin(), theta.end()), tm(theta.begin(), theta.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    tp[i] += eps * v[i];
    tm[i] -= eps * v[i];
  }
  std::vector<double> gp(v.size()), gm(v.size());
  g(tp, gp);
  g(tm, gm);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * eps);
  return out;
}

GradientFn model_gradient_fn(const ModelConfig& cfg, Batch batch) {
  auto net = std::make_shared<Network<double>>(cfg);
  auto b = std::make_shared<Batch>(std::move(batch));
  return [net, b](std::span<const double> theta, std::span<double> grad) {
    return static_cast<double>(net->loss_and_grad(theta, *b, grad).loss);
  };
}

std::vector<double> hvp(const ModelState& state, const Batch& batch, std::span<const double> v) {
  const auto theta = to_double(state.params);
  return hvp(model_gradient_fn(state.config, batch), theta, v);
}

double effective_lr(std::int64_t step, const AdamHyper& h) {
  if (h.warmup_steps <= 0) return h.lr;
  return h.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(h.warmup_steps));
}

void adam_step(ModelState& s, std::span<const float> grad, const AdamHyper& h) {
  const std::size_t n = s.params.size();
  if (grad.size() != n) throw DataError("gradient length does not match parameters");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad[i])) {
      const ParamLayout layout(s.config);
      std::string name = "?";
      for (const auto& b : layout.blocks())
        if (i >= b.offset && i < b.offset + b.size()) name = b.name + "[" + std::to_string(i - b.offset) + "]";
      throw NumericError("non-finite gradient at " + name, s.step);
    }
  if (s.step < 0) throw DataError("negative optimiser step");
  ++s.step;
  const double lr = effective_lr(s.step, h);
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
  const auto b1 = static_cast<float>(h.beta1), b2 = static_cast<float>(h.beta2);
  const auto a = static_cast<float>(lr / bc1);
  const auto rb2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(h.eps);
  float* p = s.params.data();
  float* m = s.adam_m.data();
  float* v = s.adam_v.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    p[i] -= a * m[i] / (std::sqrt(v[i]) * rb2 + eps);
  }
}

}  // namespace trace::kernel
