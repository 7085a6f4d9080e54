#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "trace/kernel/model.hpp"
#include "trace/kernel/network.hpp"

namespace trace::kernel {

struct GradientResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Double-precision loss and gradient at the state's parameters, dropout off.
GradientResult loss_and_grad(const ModelState& state, const Batch& batch);

/// Gradient oracle: writes g(theta) into grad and returns the loss.
using GradientFn = std::function<double(std::span<const double> theta, std::span<double> grad)>;

/// H v by central differences of gradients, eps = 1e-3 / max(1, |v|).
/// A zero v returns zeros without evaluating the oracle.
std::vector<double> hvp(const GradientFn& g, std::span<const double> theta, std::span<const double> v);

/// Same, on a model state and batch (dropout off, float64).
std::vector<double> hvp(const ModelState& state, const Batch& batch, std::span<const double> v);

/// Gradient oracle over a fixed batch; owns its network so it is not shared.
GradientFn model_gradient_fn(const ModelConfig& cfg, Batch batch);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t warmup_steps = 1000;
};

/// lr * min(1, step / warmup) with step the 1-based update index.
double effective_lr(std::int64_t step, const AdamHyper& h);

/// One Adam update. Increments state.step first, then uses it for warmup and
/// bias correction. A non-finite gradient aborts with the parameter's name.
void adam_step(ModelState& state, std::span<const float> grad, const AdamHyper& h = {});

}  // namespace trace::kernel
