#include "trace/kernel/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "trace/common/error.hpp"
#include "trace/kernel/blas.hpp"

namespace trace::kernel {

template <class T>
Mlp<T>::Mlp(std::vector<int> widths, double dropout) : widths_(std::move(widths)), dropout_(dropout) {
  if (widths_.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (int w : widths_)
    if (w < 1) throw ConfigError("MLP widths must be positive");
  if (!(dropout_ >= 0.0 && dropout_ < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(widths_[l] + 1) * static_cast<std::size_t>(widths_[l + 1]);
  }
  params_.assign(off, T(0));
}

template <class T>
void Mlp<T>::init(Rng& rng) {
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const std::size_t count = static_cast<std::size_t>(widths_[l] + 1) * static_cast<std::size_t>(widths_[l + 1]);
    for (std::size_t i = 0; i < count; ++i) params_[w_off(l) + i] = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <class T>
const std::vector<T>& Mlp<T>::forward(const T* x, int n, Rng* rng) {
  const std::size_t L = widths_.size() - 1;
  n_ = n;
  x_ = x;
  acts_.resize(L);
  masks_.assign(L, {});
  const T* in = x;
  for (std::size_t l = 0; l < L; ++l) {
    const int a = widths_[l], b = widths_[l + 1];
    auto& out = acts_[l];
    out.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(b));
    const T* bias = params_.data() + b_off(l);
    for (int r = 0; r < n; ++r) std::copy(bias, bias + b, out.data() + static_cast<std::size_t>(r) * b);
    gemm(false, false, n, b, a, T(1), in, a, params_.data() + w_off(l), b, T(1), out.data(), b);
    if (l + 1 < L) {
      for (auto& v : out) v = v > T(0) ? v : T(0);
      if (rng && dropout_ > 0.0) {
        auto& m = masks_[l];
        m.resize(out.size());
        const T keep = static_cast<T>(1.0 / (1.0 - dropout_));
        for (std::size_t i = 0; i < m.size(); ++i) {
          m[i] = rng->uniform() < dropout_ ? T(0) : keep;
          out[i] *= m[i];
        }
      }
    }
    in = out.data();
  }
  return acts_.back();
}

template <class T>
void Mlp<T>::backward(const T* dout, std::vector<T>& grad) {
  if (acts_.empty()) throw InternalError("MLP backward without a forward pass");
  grad.assign(params_.size(), T(0));
  const std::size_t L = widths_.size() - 1;
  std::vector<T> d(dout, dout + static_cast<std::size_t>(n_) * static_cast<std::size_t>(widths_.back()));
  std::vector<T> dprev;
  for (std::size_t l = L; l-- > 0;) {
    const int a = widths_[l], b = widths_[l + 1];
    const T* in = l == 0 ? x_ : acts_[l - 1].data();
    gemm(true, false, a, b, n_, T(1), in, a, d.data(), b, T(0), grad.data() + w_off(l), b);
    T* gb = grad.data() + b_off(l);
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < b; ++c) gb[c] += d[static_cast<std::size_t>(r) * b + static_cast<std::size_t>(c)];
    if (l == 0) break;
    dprev.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(a), T(0));
    gemm(false, true, n_, a, b, T(1), d.data(), b, params_.data() + w_off(l), b, T(0), dprev.data(), a);
    const auto& h = acts_[l - 1];
    const auto& m = masks_[l - 1];
    // h is post-ReLU (and post-dropout); zero where the unit was off or dropped
    for (std::size_t i = 0; i < dprev.size(); ++i) {
      if (!(h[i] > T(0))) dprev[i] = T(0);
      else if (!m.empty()) dprev[i] *= m[i];
    }
    d.swap(dprev);
  }
}

template <class T>
void Mlp<T>::zero_output_layer() {
  const std::size_t l = widths_.size() - 2;
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(w_off(l)), params_.end(), T(0));
}

template <class T>
void AdamBuffer<T>::step(std::vector<T>& p, const std::vector<T>& g, double lr, double b1, double b2, double eps) {
  if (g.size() != p.size()) throw DataError("gradient length does not match parameters");
  if (m.size() != p.size()) {
    m.assign(p.size(), T(0));
    v.assign(p.size(), T(0));
  }
  ++t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
    v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
    p[i] -= static_cast<T>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
  }
}

template class Mlp<float>;
template class Mlp<double>;
template struct AdamBuffer<float>;
template struct AdamBuffer<double>;

}  // namespace trace::kernel
