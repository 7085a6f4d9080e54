#include "trace/kernel/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"
#include "trace/kernel/blas.hpp"

namespace trace::kernel {

namespace {

constexpr double kLnEps = 1e-5;

// exact (erf) GELU keeps the loss smooth, so the Hessian exists everywhere
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  return cdf + x * T(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
}

template <class T>
void add_bias(T* y, int rows, int cols, const T* b) {
  for (int r = 0; r < rows; ++r) {
    T* row = y + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += b[c];
  }
}

// y = x W + b with W stored [in x out].
template <class T>
void linear(const T* x, int rows, int in, int out, const T* w, const T* b, T* y) {
  gemm(false, false, rows, out, in, T(1), x, in, w, out, T(0), y, out);
  add_bias(y, rows, out, b);
}

// dW += x^T dy, db += colsum(dy), dx (+)= dy W^T.
template <class T>
void linear_backward(const T* x, const T* dy, int rows, int in, int out, const T* w, T* dw, T* db, T* dx,
                     bool accumulate_dx) {
  gemm(true, false, in, out, rows, T(1), x, in, dy, out, T(1), dw, out);
  for (int r = 0; r < rows; ++r) {
    const T* row = dy + static_cast<std::size_t>(r) * out;
    for (int c = 0; c < out; ++c) db[c] += row[c];
  }
  if (dx) gemm(false, true, rows, in, out, T(1), dy, out, w, out, accumulate_dx ? T(1) : T(0), dx, in);
}

// dx += LN backward of dy.
template <class T>
void layer_norm_backward(const T* dy, const T* xhat, const T* rstd, const T* gamma, int rows, int d, T* dgamma,
                         T* dbeta, T* dx) {
  const T inv_d = T(1) / static_cast<T>(d);
  for (int r = 0; r < rows; ++r) {
    const std::size_t o = static_cast<std::size_t>(r) * d;
    T sum_g = 0, sum_gx = 0;
    for (int c = 0; c < d; ++c) {
      const T g = dy[o + c] * gamma[c];
      dgamma[c] += dy[o + c] * xhat[o + c];
      dbeta[c] += dy[o + c];
      sum_g += g;
      sum_gx += g * xhat[o + c];
    }
    const T mg = sum_g * inv_d, mgx = sum_gx * inv_d;
    for (int c = 0; c < d; ++c) {
      const T g = dy[o + c] * gamma[c];
      dx[o + c] += rstd[r] * (g - mg - xhat[o + c] * mgx);
    }
  }
}

template <class T>
void apply_mask(T* x, const std::vector<T>& mask, std::size_t n) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < n; ++i) x[i] *= mask[i];
}

template <class T>
bool all_finite(const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

struct Offsets {
  std::size_t ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2g = 0, ln2b = 0, w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Offsets layer_offsets(const ParamLayout& L, int l, bool ffn) {
  const std::string p = "layers." + std::to_string(l) + ".";
  auto o = [&](const char* n) { return L.at(p + n).offset; };
  Offsets r{o("ln1.gamma"), o("ln1.beta"), o("attn.wq"), o("attn.bq"), o("attn.wk"),
            o("attn.bk"),   o("attn.wv"),  o("attn.bv"), o("attn.wo"), o("attn.bo")};
  if (ffn) {
    r.ln2g = o("ln2.gamma");
    r.ln2b = o("ln2.beta");
    r.w1 = o("ffn.w1");
    r.b1 = o("ffn.b1");
    r.w2 = o("ffn.w2");
    r.b2 = o("ffn.b2");
  }
  return r;
}

}  // namespace

template <class T>
void layer_norm_forward(const T* x, int rows, int d, const T* gamma, const T* beta, T* y, T* xhat, T* rstd) {
  for (int r = 0; r < rows; ++r) {
    const std::size_t o = static_cast<std::size_t>(r) * d;
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += x[o + c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int c = 0; c < d; ++c) {
      const T dv = x[o + c] - mean;
      var += dv * dv;
    }
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    rstd[r] = rs;
    for (int c = 0; c < d; ++c) {
      const T h = (x[o + c] - mean) * rs;
      xhat[o + c] = h;
      y[o + c] = gamma[c] * h + beta[c];
    }
  }
}

template <class T>
void softmax_rows(T* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* row = x + static_cast<std::size_t>(r) * cols;
    const T mx = *std::max_element(row, row + cols);
    for (int c = 0; c < cols; ++c) row[c] -= mx;
    exp_inplace(row, static_cast<std::size_t>(cols));
    T s = 0;
    for (int c = 0; c < cols; ++c) s += row[c];
    const T inv = T(1) / s;
    for (int c = 0; c < cols; ++c) row[c] *= inv;
  }
}

template <class T>
Network<T>::Network(const ModelConfig& cfg) : cfg_(cfg), layout_(cfg) {
  cfg_.validate();
  const int d = cfg_.d_model;
  // one spare position so analysis batches can carry BOS plus a full sentence
  const int P = cfg_.seq_len + 1;
  pe_.assign(static_cast<std::size_t>(P * d), T(0));
  for (int t = 0; t < P; ++t)
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      pe_[static_cast<std::size_t>(t * d + i)] = static_cast<T>(std::sin(t * freq));
      if (i + 1 < d) pe_[static_cast<std::size_t>(t * d + i + 1)] = static_cast<T>(std::cos(t * freq));
    }
  layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
}

template <class T>
void Network<T>::dropout_mask(std::vector<T>& mask, std::size_t n, std::uint64_t site, const RunOptions& opt) {
  if (!opt.dropout || cfg_.dropout <= 0.0) {
    mask.clear();
    return;
  }
  mask.resize(n);
  Rng rng = Rng::stream(mix_seed(opt.dropout_seed, static_cast<std::uint64_t>(opt.step)), "dropout", site);
  const T keep = static_cast<T>(1.0 / (1.0 - cfg_.dropout));
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < cfg_.dropout ? T(0) : keep;
}

template <class T>
void Network<T>::run_forward(std::span<const T> params, const Batch& batch, const RunOptions& opt) {
  if (params.size() != layout_.total())
    throw DataError("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                    std::to_string(layout_.total()));
  if (batch.T > cfg_.seq_len + 1 || batch.B < 1 || batch.T < 1)
    throw DataError("batch shape outside the model's sequence length");
  const int d = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.d_head(), F = cfg_.d_ffn;
  B_ = batch.B;
  T_ = batch.T;
  N_ = B_ * T_;
  const auto N = static_cast<std::size_t>(N_), nd = N * static_cast<std::size_t>(d);
  const T* P = params.data();
  const T* E = P + layout_.at("tok_emb").offset;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));

  x0_.resize(nd);
  for (int r = 0; r < N_; ++r) {
    const std::int32_t id = batch.inputs[static_cast<std::size_t>(r)];
    if (id < 0 || id >= cfg_.vocab_size) throw DataError("token id " + std::to_string(id) + " out of range");
    const int t = r % T_;
    const T* e = E + static_cast<std::size_t>(id) * d;
    T* x = &x0_[static_cast<std::size_t>(r) * d];
    for (int c = 0; c < d; ++c) x[c] = e[c] * scale + pe_[static_cast<std::size_t>(t * d + c)];
  }
  dropout_mask(mask0_, nd, 0, opt);
  apply_mask(x0_.data(), mask0_, nd);

  const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const std::vector<T>* xin = &x0_;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    LayerCache& c = layers_[static_cast<std::size_t>(l)];
    const Offsets o = layer_offsets(layout_, l, cfg_.use_ffn);
    c.xin = *xin;
    c.ln1_xhat.resize(nd);
    c.ln1_rstd.resize(N);
    if (cfg_.pre_norm) {
      c.ain.resize(nd);
      layer_norm_forward(c.xin.data(), N_, d, P + o.ln1g, P + o.ln1b, c.ain.data(), c.ln1_xhat.data(),
                         c.ln1_rstd.data());
    } else {
      c.ain = c.xin;
    }
    c.q.resize(nd);
    c.k.resize(nd);
    c.v.resize(nd);
    linear(c.ain.data(), N_, d, d, P + o.wq, P + o.bq, c.q.data());
    linear(c.ain.data(), N_, d, d, P + o.wk, P + o.bk, c.k.data());
    linear(c.ain.data(), N_, d, d, P + o.wv, P + o.bv, c.v.data());
    c.probs.assign(static_cast<std::size_t>(B_ * H * T_ * T_), T(0));
    c.ctx.assign(nd, T(0));
    for (int b = 0; b < B_; ++b)
      for (int h = 0; h < H; ++h) {
        T* pr = &c.probs[static_cast<std::size_t>((b * H + h) * T_ * T_)];
        for (int i = 0; i < T_; ++i) {
          const T* qi = &c.q[static_cast<std::size_t>((b * T_ + i) * d + h * dh)];
          T* row = pr + static_cast<std::size_t>(i * T_);
          T mx = -std::numeric_limits<T>::infinity();
          for (int j = 0; j <= i; ++j) {
            const T* kj = &c.k[static_cast<std::size_t>((b * T_ + j) * d + h * dh)];
            T s = 0;
            for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
            row[j] = s * att_scale;
            mx = std::max(mx, row[j]);
          }
          T sum = 0;
          for (int j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          T* out = &c.ctx[static_cast<std::size_t>((b * T_ + i) * d + h * dh)];
          for (int j = 0; j <= i; ++j) {
            row[j] /= sum;
            const T* vj = &c.v[static_cast<std::size_t>((b * T_ + j) * d + h * dh)];
            for (int e = 0; e < dh; ++e) out[e] += row[j] * vj[e];
          }
        }
      }
    std::vector<T> y(nd);
    linear(c.ctx.data(), N_, d, d, P + o.wo, P + o.bo, y.data());
    dropout_mask(c.mask1, nd, static_cast<std::uint64_t>(1 + 2 * l), opt);
    apply_mask(y.data(), c.mask1, nd);
    c.x1.resize(nd);
    for (std::size_t i = 0; i < nd; ++i) c.x1[i] = c.xin[i] + y[i];
    if (!cfg_.pre_norm) {
      std::vector<T> s1 = c.x1;
      layer_norm_forward(s1.data(), N_, d, P + o.ln1g, P + o.ln1b, c.x1.data(), c.ln1_xhat.data(),
                         c.ln1_rstd.data());
    }
    std::vector<T>* out = &c.x1;
    if (cfg_.use_ffn) {
      c.ffn_in.resize(nd);
      c.ln2_xhat.resize(nd);
      c.ln2_rstd.resize(N);
      if (cfg_.pre_norm)
        layer_norm_forward(c.x1.data(), N_, d, P + o.ln2g, P + o.ln2b, c.ffn_in.data(), c.ln2_xhat.data(),
                           c.ln2_rstd.data());
      else
        c.ffn_in = c.x1;
      const auto nf = N * static_cast<std::size_t>(F);
      c.hpre.resize(nf);
      c.h.resize(nf);
      linear(c.ffn_in.data(), N_, d, F, P + o.w1, P + o.b1, c.hpre.data());
      for (std::size_t i = 0; i < nf; ++i) c.h[i] = gelu(c.hpre[i]);
      std::vector<T> z(nd);
      linear(c.h.data(), N_, F, d, P + o.w2, P + o.b2, z.data());
      dropout_mask(c.mask2, nd, static_cast<std::uint64_t>(2 + 2 * l), opt);
      apply_mask(z.data(), c.mask2, nd);
      c.s2.resize(nd);
      for (std::size_t i = 0; i < nd; ++i) c.s2[i] = c.x1[i] + z[i];
      if (!cfg_.pre_norm) {
        std::vector<T> s2 = c.s2;
        layer_norm_forward(s2.data(), N_, d, P + o.ln2g, P + o.ln2b, c.s2.data(), c.ln2_xhat.data(),
                           c.ln2_rstd.data());
      }
      out = &c.s2;
    }
    xin = out;
  }
  xlast_ = *xin;
  if (cfg_.pre_norm) {
    xf_.resize(nd);
    lnf_xhat_.resize(nd);
    lnf_rstd_.resize(N);
    layer_norm_forward(xlast_.data(), N_, d, P + layout_.at("ln_f.gamma").offset, P + layout_.at("ln_f.beta").offset,
                       xf_.data(), lnf_xhat_.data(), lnf_rstd_.data());
  } else {
    xf_ = xlast_;
  }
}

template <class T>
LossResult<T> Network<T>::loss_and_grad(std::span<const T> params, const Batch& batch, std::span<T> grad,
                                        const RunOptions& opt) {
  const int R = batch.n_targets();
  if (R == 0) throw DataError("batch has no prediction targets (all padding)");
  run_forward(params, batch, opt);
  const int d = cfg_.d_model, V = cfg_.vocab_size, H = cfg_.n_heads, dh = cfg_.d_head(), F = cfg_.d_ffn;
  const T* P = params.data();
  const std::size_t e_off = layout_.at("tok_emb").offset;
  const T* E = P + e_off;

  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(R));
  for (int r = 0; r < N_; ++r)
    if (batch.targets[static_cast<std::size_t>(r)] >= 0) rows.push_back(r);
  std::vector<T> xr(static_cast<std::size_t>(R) * d);
  for (int i = 0; i < R; ++i)
    std::copy_n(&xf_[static_cast<std::size_t>(rows[i]) * d], d, &xr[static_cast<std::size_t>(i) * d]);
  auto& logits = logits_buf_;
  logits.resize(static_cast<std::size_t>(R) * V);
  gemm(false, true, R, V, d, T(1), xr.data(), d, E, d, T(0), logits.data(), V);

  LossResult<T> res;
  res.n_targets = R;
  double total = 0.0;
  for (int i = 0; i < R; ++i) {
    T* row = &logits[static_cast<std::size_t>(i) * V];
    const int tgt = batch.targets[static_cast<std::size_t>(rows[i])];
    if (tgt >= V) throw DataError("target id out of range");
    const auto amax = static_cast<int>(std::max_element(row, row + V) - row);
    const T mx = row[amax];
    if (amax == tgt) ++res.n_correct;
    const T zt = row[tgt];
    for (int c = 0; c < V; ++c) row[c] -= mx;
    exp_inplace(row, static_cast<std::size_t>(V));
    T s = 0;
    for (int c = 0; c < V; ++c) s += row[c];
    total += static_cast<double>(std::log(s) + mx - zt);
    const T inv = T(1) / s;
    for (int c = 0; c < V; ++c) row[c] *= inv;
  }
  res.loss = static_cast<T>(total / R);
  if (!std::isfinite(res.loss)) throw NumericError("non-finite training loss", opt.step);
  if (grad.empty()) return res;
  if (grad.size() != layout_.total()) throw DataError("gradient buffer has the wrong size");

  std::fill(grad.begin(), grad.end(), T(0));
  T* G = grad.data();
  const auto N = static_cast<std::size_t>(N_), nd = N * static_cast<std::size_t>(d);
  // dlogits = (softmax - onehot) / R
  const T invR = T(1) / static_cast<T>(R);
  for (int i = 0; i < R; ++i) {
    T* row = &logits[static_cast<std::size_t>(i) * V];
    row[batch.targets[static_cast<std::size_t>(rows[i])]] -= T(1);
    for (int c = 0; c < V; ++c) row[c] *= invR;
  }
  std::vector<T> dxr(static_cast<std::size_t>(R) * d);
  gemm(false, false, R, d, V, T(1), logits.data(), V, E, d, T(0), dxr.data(), d);
  gemm(true, false, V, d, R, T(1), logits.data(), V, xr.data(), d, T(1), G + e_off, d);

  std::vector<T> dx(nd, T(0));
  if (cfg_.pre_norm) {
    std::vector<T> dxf(nd, T(0));
    for (int i = 0; i < R; ++i)
      std::copy_n(&dxr[static_cast<std::size_t>(i) * d], d, &dxf[static_cast<std::size_t>(rows[i]) * d]);
    layer_norm_backward(dxf.data(), lnf_xhat_.data(), lnf_rstd_.data(), P + layout_.at("ln_f.gamma").offset, N_, d,
                        G + layout_.at("ln_f.gamma").offset, G + layout_.at("ln_f.beta").offset, dx.data());
  } else {
    for (int i = 0; i < R; ++i)
      std::copy_n(&dxr[static_cast<std::size_t>(i) * d], d, &dx[static_cast<std::size_t>(rows[i]) * d]);
  }

  const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<T> tmp(nd), dq(nd), dk(nd), dv(nd), dctx(nd), dain(nd);
  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    LayerCache& c = layers_[static_cast<std::size_t>(l)];
    const Offsets o = layer_offsets(layout_, l, cfg_.use_ffn);
    // dx holds the gradient w.r.t. this layer's output.
    std::vector<T> dx1;
    if (cfg_.use_ffn) {
      std::vector<T> ds2;
      if (cfg_.pre_norm) {
        ds2 = dx;
      } else {
        ds2.assign(nd, T(0));
        layer_norm_backward(dx.data(), c.ln2_xhat.data(), c.ln2_rstd.data(), P + o.ln2g, N_, d, G + o.ln2g,
                            G + o.ln2b, ds2.data());
      }
      std::vector<T> dz = ds2;
      apply_mask(dz.data(), c.mask2, nd);
      std::vector<T> dh(N * static_cast<std::size_t>(F));
      linear_backward(c.h.data(), dz.data(), N_, F, d, P + o.w2, G + o.w2, G + o.b2, dh.data(), false);
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= gelu_grad(c.hpre[i]);
      std::vector<T> dfin(nd);
      linear_backward(c.ffn_in.data(), dh.data(), N_, d, F, P + o.w1, G + o.w1, G + o.b1, dfin.data(), false);
      dx1 = ds2;
      if (cfg_.pre_norm)
        layer_norm_backward(dfin.data(), c.ln2_xhat.data(), c.ln2_rstd.data(), P + o.ln2g, N_, d, G + o.ln2g,
                            G + o.ln2b, dx1.data());
      else
        for (std::size_t i = 0; i < nd; ++i) dx1[i] += dfin[i];
    } else {
      dx1 = dx;
    }
    // attention sublayer; ds1 is the gradient at the residual sum
    std::vector<T> ds1;
    if (cfg_.pre_norm) {
      ds1 = dx1;
    } else {
      ds1.assign(nd, T(0));
      layer_norm_backward(dx1.data(), c.ln1_xhat.data(), c.ln1_rstd.data(), P + o.ln1g, N_, d, G + o.ln1g,
                          G + o.ln1b, ds1.data());
    }
    std::copy(ds1.begin(), ds1.end(), tmp.begin());
    apply_mask(tmp.data(), c.mask1, nd);
    linear_backward(c.ctx.data(), tmp.data(), N_, d, d, P + o.wo, G + o.wo, G + o.bo, dctx.data(), false);
    std::fill(dq.begin(), dq.end(), T(0));
    std::fill(dk.begin(), dk.end(), T(0));
    std::fill(dv.begin(), dv.end(), T(0));
    std::vector<T> dp(static_cast<std::size_t>(T_));
    for (int b = 0; b < B_; ++b)
      for (int h = 0; h < H; ++h) {
        const T* pr = &c.probs[static_cast<std::size_t>((b * H + h) * T_ * T_)];
        for (int i = 0; i < T_; ++i) {
          const T* row = pr + static_cast<std::size_t>(i * T_);
          const std::size_t oi = static_cast<std::size_t>((b * T_ + i) * d + h * dh);
          const T* g = &dctx[oi];
          T dot = 0;
          for (int j = 0; j <= i; ++j) {
            const std::size_t oj = static_cast<std::size_t>((b * T_ + j) * d + h * dh);
            T s = 0;
            for (int e = 0; e < dh; ++e) {
              s += g[e] * c.v[oj + e];
              dv[oj + e] += row[j] * g[e];
            }
            dp[static_cast<std::size_t>(j)] = s;
            dot += row[j] * s;
          }
          for (int j = 0; j <= i; ++j) {
            const std::size_t oj = static_cast<std::size_t>((b * T_ + j) * d + h * dh);
            const T ds = row[j] * (dp[static_cast<std::size_t>(j)] - dot) * att_scale;
            for (int e = 0; e < dh; ++e) {
              dq[oi + e] += ds * c.k[oj + e];
              dk[oj + e] += ds * c.q[oi + e];
            }
          }
        }
      }
    linear_backward(c.ain.data(), dq.data(), N_, d, d, P + o.wq, G + o.wq, G + o.bq, dain.data(), false);
    linear_backward(c.ain.data(), dk.data(), N_, d, d, P + o.wk, G + o.wk, G + o.bk, dain.data(), true);
    linear_backward(c.ain.data(), dv.data(), N_, d, d, P + o.wv, G + o.wv, G + o.bv, dain.data(), true);
    dx = ds1;
    if (cfg_.pre_norm)
      layer_norm_backward(dain.data(), c.ln1_xhat.data(), c.ln1_rstd.data(), P + o.ln1g, N_, d, G + o.ln1g,
                          G + o.ln1b, dx.data());
    else
      for (std::size_t i = 0; i < nd; ++i) dx[i] += dain[i];
  }
  apply_mask(dx.data(), mask0_, nd);
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  for (int r = 0; r < N_; ++r) {
    const auto id = static_cast<std::size_t>(batch.inputs[static_cast<std::size_t>(r)]);
    T* ge = G + e_off + id * static_cast<std::size_t>(d);
    const T* g = &dx[static_cast<std::size_t>(r) * d];
    for (int c = 0; c < d; ++c) ge[c] += g[c] * scale;
  }
  if (!all_finite(G, grad.size())) throw NumericError("non-finite gradient", opt.step);
  return res;
}

template <class T>
ForwardTrace<T> Network<T>::forward(std::span<const T> params, const Batch& batch, bool capture, bool logits) {
  run_forward(params, batch, RunOptions{});
  ForwardTrace<T> tr;
  tr.B = B_;
  tr.T = T_;
  tr.d_model = cfg_.d_model;
  tr.vocab = cfg_.vocab_size;
  if (capture) {
    tr.hidden.push_back(x0_);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const auto& c = layers_[static_cast<std::size_t>(l)];
      tr.hidden.push_back(cfg_.use_ffn ? c.s2 : c.x1);
    }
  }
  if (logits) {
    const int d = cfg_.d_model, V = cfg_.vocab_size;
    tr.logits.resize(static_cast<std::size_t>(N_) * V);
    gemm(false, true, N_, V, d, T(1), xf_.data(), d, params.data() + layout_.at("tok_emb").offset, d, T(0),
         tr.logits.data(), V);
  }
  return tr;
}

template <class T>
std::vector<T> Network<T>::logits_at(std::span<const T> params, const Batch& batch, const std::vector<int>& rows) {
  run_forward(params, batch, RunOptions{});
  const int d = cfg_.d_model, V = cfg_.vocab_size;
  const int R = static_cast<int>(rows.size());
  std::vector<T> xr(static_cast<std::size_t>(R) * d);
  for (int i = 0; i < R; ++i) {
    if (rows[i] < 0 || rows[i] >= N_) throw DataError("logit row outside the batch");
    std::copy_n(&xf_[static_cast<std::size_t>(rows[i]) * d], d, &xr[static_cast<std::size_t>(i) * d]);
  }
  std::vector<T> out(static_cast<std::size_t>(R) * V);
  gemm(false, true, R, V, d, T(1), xr.data(), d, params.data() + layout_.at("tok_emb").offset, d, T(0), out.data(),
       V);
  return out;
}

template class Network<float>;
template class Network<double>;
template void layer_norm_forward(const float*, int, int, const float*, const float*, float*, float*, float*);
template void layer_norm_forward(const double*, int, int, const double*, const double*, double*, double*, double*);
template void softmax_rows(float*, int, int);
template void softmax_rows(double*, int, int);

}  // namespace trace::kernel
