#include "trace/transformer/train.hpp"

#include <algorithm>
#include <cmath>

#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"
#include "trace/kernel/network.hpp"

namespace trace::transformer {

void Schedule::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (plateau_window < 1) throw ConfigError("plateau_window must be >= 1");
  if (!(plateau_smoothing > 0.0 && plateau_smoothing <= 1.0)) throw ConfigError("plateau_smoothing must be in (0, 1]");
  if (val_sentences < 1) throw ConfigError("val_sentences must be >= 1");
  if (!(divergence_factor > 1.0) || divergence_window < 1) throw ConfigError("bad divergence rule");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::Budget: return "budget";
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::Plateau: return "plateau";
    case StopReason::Diverged: return "diverged";
  }
  return "?";
}

namespace {

bool plateaued(const std::vector<double>& s, const Schedule& sch) {
  const auto w = static_cast<std::size_t>(sch.plateau_window);
  if (s.size() <= w) return false;
  return std::abs(s.back() - s[s.size() - 1 - w]) < sch.plateau_delta;
}

}  // namespace

TrainResult train(kernel::ModelState& state, const TrainData& data, const Schedule& sch, TrainProgress progress,
                  const StepHook& on_step, const CheckpointHook& on_checkpoint) {
  sch.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.val.empty()) throw DataError("validation split is empty");
  const auto& cfg = state.config;
  kernel::Network<float> net(cfg);
  const Sequences val(data.val.begin(),
                      data.val.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(data.val.size(),
                                                                                         static_cast<std::size_t>(sch.val_sentences))));
  TrainResult res;

  auto checkpoint = [&] {
    CheckpointInfo ci;
    ci.step = state.step;
    ci.val_token_acc = evaluate(model_logits(state), val, cfg.vocab_size, cfg.seq_len, false).token_accuracy;
    auto& s = progress.smoothed;
    ci.smoothed = s.empty() ? ci.val_token_acc
                            : sch.plateau_smoothing * ci.val_token_acc + (1.0 - sch.plateau_smoothing) * s.back();
    s.push_back(ci.smoothed);
    res.checkpoints.push_back(ci);
    if (on_checkpoint) on_checkpoint(state, ci);
  };

  if (state.step == 0 && progress.smoothed.empty()) checkpoint();

  const std::size_t n = data.train.size();
  const auto bs = static_cast<std::size_t>(sch.batch_size);
  const auto n_batches = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::uint64_t dropout_seed = mix_seed(state.seed, fnv1a("dropout"));
  std::vector<float> grad(state.params.size());

  auto stop = [&](StopReason r) {
    res.reason = r;
    res.progress = progress;
    return res;
  };

  while (state.epoch < sch.epochs) {
    const auto order = Rng::stream(state.seed, "shuffle", static_cast<std::uint64_t>(state.epoch)).permutation(n);
    bool epoch_done = false;
    while (!epoch_done) {
      if (sch.max_steps > 0 && state.step >= sch.max_steps) return stop(StopReason::MaxSteps);
      Sequences part;
      const std::size_t lo = static_cast<std::size_t>(state.cursor) * bs;
      for (std::size_t i = lo; i < std::min(n, lo + bs); ++i) part.push_back(data.train[order[i]]);
      const auto batch = kernel::make_batch(part, cfg.seq_len);
      kernel::RunOptions opt;
      opt.dropout = cfg.dropout > 0.0;
      opt.dropout_seed = dropout_seed;
      opt.step = state.step;
      const auto lr = net.loss_and_grad(state.params, batch, grad, opt);
      kernel::adam_step(state, grad, sch.adam);
      if (++state.cursor == n_batches) {
        state.cursor = 0;
        ++state.epoch;
        epoch_done = true;
      }

      StepRecord rec{state.step, lr.loss, static_cast<double>(lr.n_correct) / static_cast<double>(lr.n_targets)};
      if (progress.initial_loss < 0) progress.initial_loss = lr.loss;
      progress.divergent_run = lr.loss > sch.divergence_factor * progress.initial_loss ? progress.divergent_run + 1 : 0;
      if (on_step) on_step(rec);
      if (progress.divergent_run >= sch.divergence_window) return stop(StopReason::Diverged);
      if (state.step % sch.checkpoint_every == 0) {
        checkpoint();
        if (sch.plateau_stop && plateaued(progress.smoothed, sch)) return stop(StopReason::Plateau);
      }
    }
  }
  return stop(StopReason::Budget);
}

}  // namespace trace::transformer
