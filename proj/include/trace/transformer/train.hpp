#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trace/kernel/model.hpp"
#include "trace/kernel/optim.hpp"
#include "trace/transformer/evaluate.hpp"

namespace trace::transformer {

struct Schedule {
  int epochs = 500;
  int batch_size = 128;
  int checkpoint_every = 500;
  std::int64_t max_steps = 0;  // 0 = no cap
  kernel::AdamHyper adam;
  // plateau: smoothed validation token accuracy moves < plateau_delta across
  // plateau_window checkpoints
  bool plateau_stop = true;
  int plateau_window = 20;
  double plateau_delta = 1e-3;
  double plateau_smoothing = 0.3;  // EMA weight of the newest checkpoint
  int val_sentences = 500;         // validation subset scored at each checkpoint
  // divergence: loss above factor x initial loss for window consecutive steps
  double divergence_factor = 10.0;
  std::int64_t divergence_window = 1000;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double token_acc = 0.0;
};

struct CheckpointInfo {
  std::int64_t step = 0;
  double val_token_acc = 0.0;
  double smoothed = 0.0;
};

enum class StopReason { Budget, MaxSteps, Plateau, Diverged };
std::string to_string(StopReason r);

/// Carried across resumes so the plateau and divergence rules see the whole run.
struct TrainProgress {
  double initial_loss = -1.0;  // < 0 until the first step
  std::int64_t divergent_run = 0;
  std::vector<double> smoothed;  // one entry per checkpoint so far
};

struct TrainData {
  Sequences train;
  Sequences val;
};

using StepHook = std::function<void(const StepRecord&)>;
using CheckpointHook = std::function<void(const kernel::ModelState&, const CheckpointInfo&)>;

struct TrainResult {
  StopReason reason = StopReason::Budget;
  TrainProgress progress;
  std::vector<CheckpointInfo> checkpoints;  // this call only
};

/// Adam training with warmup and dropout. A fresh state (step 0) is checkpointed
/// before the first update; later checkpoints land every checkpoint_every steps.
/// A resumed state continues from its epoch and cursor.
TrainResult train(kernel::ModelState& state, const TrainData& data, const Schedule& schedule,
                  TrainProgress progress = {}, const StepHook& on_step = {}, const CheckpointHook& on_checkpoint = {});

}  // namespace trace::transformer
