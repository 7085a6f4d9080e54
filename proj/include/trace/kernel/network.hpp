#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trace/kernel/model.hpp"

namespace trace::kernel {

struct RunOptions {
  bool dropout = false;            // training mode
  std::uint64_t dropout_seed = 0;  // mask stream, combined with `step`
  std::int64_t step = 0;           // reported in numeric errors
};

template <class T>
struct LossResult {
  T loss = 0;                // mean cross-entropy over targets
  std::int64_t n_targets = 0;
  std::int64_t n_correct = 0;  // argmax hits
};

/// Hidden states [B*T x d] for the embedding output and each layer, plus the
/// logits [B*T x V] at every position when requested.
template <class F>
struct ForwardTrace {
  int B = 0, T = 0, d_model = 0, vocab = 0;
  std::vector<std::vector<F>> hidden;
  std::vector<F> logits;
};

/// Decoder-only transformer evaluated on a flat parameter vector. Holds
/// scratch buffers, so one instance must not be shared between threads.
template <class T>
class Network {
 public:
  explicit Network(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }

  /// Loss over the batch targets. When `grad` is non-empty it receives the
  /// gradient (overwritten, not accumulated).
  LossResult<T> loss_and_grad(std::span<const T> params, const Batch& batch, std::span<T> grad,
                              const RunOptions& opt = {});

  /// Evaluation-mode forward pass.
  ForwardTrace<T> forward(std::span<const T> params, const Batch& batch, bool capture, bool logits = true);

  /// Evaluation-mode logits [rows.size() x V] at the given flat positions b*T+t.
  std::vector<T> logits_at(std::span<const T> params, const Batch& batch, const std::vector<int>& rows);

 private:
  struct LayerCache {
    std::vector<T> xin, ain, ln1_xhat, ln1_rstd, q, k, v, probs, ctx, mask1;
    std::vector<T> x1, ffn_in, ln2_xhat, ln2_rstd, hpre, h, mask2, s2;
  };

  void run_forward(std::span<const T> params, const Batch& batch, const RunOptions& opt);
  void dropout_mask(std::vector<T>& mask, std::size_t n, std::uint64_t site, const RunOptions& opt);

  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<T> pe_;
  // forward state for the most recent batch
  int B_ = 0, T_ = 0, N_ = 0;
  std::vector<T> x0_, mask0_;
  std::vector<LayerCache> layers_;
  std::vector<T> xlast_, xf_, lnf_xhat_, lnf_rstd_;
  std::vector<T> logits_buf_;  // reused across calls; the vocabulary head is large
};

extern template class Network<float>;
extern template class Network<double>;

/// Row-wise layer norm helpers, exposed for testing.
template <class T>
void layer_norm_forward(const T* x, int rows, int d, const T* gamma, const T* beta, T* y, T* xhat, T* rstd);
template <class T>
void softmax_rows(T* x, int rows, int cols);

}  // namespace trace::kernel
