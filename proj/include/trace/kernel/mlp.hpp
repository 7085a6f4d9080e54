#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trace/common/rng.hpp"

namespace trace::kernel {

/// Fully connected net: affine maps between consecutive widths, ReLU (then
/// optional inverted dropout) after every hidden layer, linear output.
/// Parameters are flat: W0 [w0 x w1] row-major, b0, W1, b1, ...
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, double dropout = 0.0);

  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init(Rng& rng);

  const std::vector<int>& widths() const { return widths_; }
  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  std::size_t n_params() const { return params_.size(); }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }

  /// Output pre-activations [n x out]. Dropout applies only when `rng` is given;
  /// activations are cached for one backward call.
  const std::vector<T>& forward(const T* x, int n, Rng* dropout_rng = nullptr);

  /// Parameter gradient of sum(dout * out) for the last forward pass.
  void backward(const T* dout, std::vector<T>& grad);

  /// Zeroes the last affine map (weights and bias).
  void zero_output_layer();

 private:
  std::size_t w_off(std::size_t l) const { return offsets_[l]; }
  std::size_t b_off(std::size_t l) const {
    return offsets_[l] + static_cast<std::size_t>(widths_[l]) * static_cast<std::size_t>(widths_[l + 1]);
  }

  std::vector<int> widths_;
  double dropout_ = 0.0;
  std::vector<T> params_;
  std::vector<std::size_t> offsets_;
  int n_ = 0;
  const T* x_ = nullptr;
  std::vector<std::vector<T>> acts_;   // post-activation outputs of each layer
  std::vector<std::vector<T>> masks_;  // dropout masks of hidden layers (empty when off)
};

/// Adam over a flat parameter vector; t is the 1-based step after increment.
template <class T>
struct AdamBuffer {
  std::vector<T> m, v;
  std::int64_t t = 0;
  void step(std::vector<T>& params, const std::vector<T>& grad, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8);
};

}  // namespace trace::kernel
