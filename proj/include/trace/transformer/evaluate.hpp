#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trace/kernel/model.hpp"

namespace trace::transformer {

using Sequences = std::vector<std::vector<std::int32_t>>;

struct EvalMetrics {
  double exact_match = 0.0;
  double token_accuracy = 0.0;
  double bleu = 0.0;
  double perplexity = 0.0;
  std::int64_t n_sequences = 0;
  std::int64_t n_tokens = 0;
};

/// Logits [rows.size() x V] at flat positions b*T+t of a batch.
using LogitsFn = std::function<std::vector<float>(const kernel::Batch&, const std::vector<int>& rows)>;

/// Logits of a trained model in evaluation mode (owns its own network).
LogitsFn model_logits(const kernel::ModelState& state);

/// Token accuracy and perplexity over every next-token target; exact match is
/// the share of sequences whose every teacher-forced argmax is right, which is
/// the same event as greedy decoding from BOS reproducing the sequence. BLEU is
/// corpus BLEU-4 (add-one smoothed) of greedy continuations after a 3-token prompt.
EvalMetrics evaluate(const LogitsFn& logits, const Sequences& seqs, int vocab_size, int seq_len = 16,
                     bool with_bleu = true, int batch_size = 64);
EvalMetrics evaluate(const kernel::ModelState& state, const Sequences& seqs, bool with_bleu = true);

/// Greedy continuation of each prompt by `lengths[i]` tokens.
Sequences greedy_continue(const LogitsFn& logits, const Sequences& prompts, const std::vector<int>& lengths,
                          int vocab_size, int seq_len = 16, int batch_size = 64);

/// Corpus BLEU-4 with add-one smoothing of every n-gram precision.
double corpus_bleu4(const Sequences& hypotheses, const Sequences& references);

/// Greedy next-token predictions at every target position, in batch order.
std::vector<std::int32_t> argmax_predictions(const LogitsFn& logits, const kernel::Batch& batch, int vocab_size);

}  // namespace trace::transformer
