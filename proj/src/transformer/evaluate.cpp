#include "trace/transformer/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "trace/common/error.hpp"
#include "trace/kernel/blas.hpp"
#include "trace/kernel/network.hpp"

namespace trace::transformer {

LogitsFn model_logits(const kernel::ModelState& state) {
  auto net = std::make_shared<kernel::Network<float>>(state.config);
  auto params = std::make_shared<std::vector<float>>(state.params);
  return [net, params](const kernel::Batch& b, const std::vector<int>& rows) {
    return net->logits_at(*params, b, rows);
  };
}

namespace {

std::vector<int> target_rows(const kernel::Batch& b) {
  std::vector<int> rows;
  for (int r = 0; r < b.B * b.T; ++r)
    if (b.targets[static_cast<std::size_t>(r)] >= 0) rows.push_back(r);
  return rows;
}

int argmax(const float* row, int V) { return static_cast<int>(std::max_element(row, row + V) - row); }

}  // namespace

std::vector<std::int32_t> argmax_predictions(const LogitsFn& logits, const kernel::Batch& batch, int vocab_size) {
  const auto rows = target_rows(batch);
  const auto lg = logits(batch, rows);
  std::vector<std::int32_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = argmax(&lg[i * static_cast<std::size_t>(vocab_size)], vocab_size);
  return out;
}

Sequences greedy_continue(const LogitsFn& logits, const Sequences& prompts, const std::vector<int>& lengths,
                          int vocab_size, int seq_len, int batch_size) {
  Sequences out(prompts.size());
  for (std::size_t start = 0; start < prompts.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(prompts.size(), start + static_cast<std::size_t>(batch_size));
    Sequences cur(prompts.begin() + static_cast<std::ptrdiff_t>(start), prompts.begin() + static_cast<std::ptrdiff_t>(end));
    int steps = 0;
    for (std::size_t i = start; i < end; ++i) steps = std::max(steps, lengths[i]);
    for (int s = 0; s < steps; ++s) {
      std::vector<std::size_t> active;
      Sequences feed;
      for (std::size_t i = 0; i < cur.size(); ++i)
        if (s < lengths[start + i] && static_cast<int>(cur[i].size()) < seq_len) {
          active.push_back(i);
          feed.push_back(cur[i]);
        }
      if (active.empty()) break;
      const auto batch = kernel::make_feature_batch(feed, seq_len);
      std::vector<int> rows;
      for (std::size_t k = 0; k < feed.size(); ++k)
        rows.push_back(static_cast<int>(k) * batch.T + static_cast<int>(feed[k].size()));
      const auto lg = logits(batch, rows);
      for (std::size_t k = 0; k < active.size(); ++k) {
        const int next = argmax(&lg[k * static_cast<std::size_t>(vocab_size)], vocab_size);
        cur[active[k]].push_back(next);
        out[start + active[k]].push_back(next);
      }
    }
  }
  return out;
}

double corpus_bleu4(const Sequences& hyps, const Sequences& refs) {
  if (hyps.size() != refs.size()) throw DataError("BLEU needs one reference per hypothesis");
  std::array<double, 4> match{}, total{};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::int32_t>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n)}];
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        total[n - 1] += 1;
        auto it = ref_counts.find({h.begin() + static_cast<std::ptrdiff_t>(i), h.begin() + static_cast<std::ptrdiff_t>(i + n)});
        if (it != ref_counts.end() && it->second > 0) {
          --it->second;
          match[n - 1] += 1;
        }
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) log_p += std::log((match[n] + 1.0) / (total[n] + 1.0));
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_p / 4.0);
}

EvalMetrics evaluate(const LogitsFn& logits, const Sequences& seqs, int V, int seq_len, bool with_bleu,
                     int batch_size) {
  if (seqs.empty()) throw DataError("evaluate needs a non-empty split");
  EvalMetrics m;
  double nll = 0.0;
  std::int64_t correct = 0, exact = 0;
  for (std::size_t start = 0; start < seqs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(seqs.size(), start + static_cast<std::size_t>(batch_size));
    const Sequences part(seqs.begin() + static_cast<std::ptrdiff_t>(start), seqs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = kernel::make_batch(part, seq_len);
    const auto rows = target_rows(batch);
    auto lg = logits(batch, rows);
    std::vector<bool> ok(part.size(), true);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      float* row = &lg[i * static_cast<std::size_t>(V)];
      const int tgt = batch.targets[static_cast<std::size_t>(rows[i])];
      const int am = argmax(row, V);
      const float mx = row[am];
      const float zt = row[tgt];
      for (int c = 0; c < V; ++c) row[c] -= mx;
      kernel::exp_inplace(row, static_cast<std::size_t>(V));
      double s = 0.0;
      for (int c = 0; c < V; ++c) s += row[c];
      nll += std::log(s) + static_cast<double>(mx) - static_cast<double>(zt);
      if (am == tgt)
        ++correct;
      else
        ok[static_cast<std::size_t>(rows[i] / batch.T)] = false;
      ++m.n_tokens;
    }
    for (std::size_t b = 0; b < part.size(); ++b)
      if (!part[b].empty() && ok[b]) ++exact;
  }
  m.n_sequences = static_cast<std::int64_t>(seqs.size());
  if (m.n_tokens == 0) throw DataError("evaluate split has no tokens");
  m.token_accuracy = static_cast<double>(correct) / static_cast<double>(m.n_tokens);
  m.perplexity = std::exp(nll / static_cast<double>(m.n_tokens));
  m.exact_match = static_cast<double>(exact) / static_cast<double>(seqs.size());
  if (with_bleu) {
    Sequences prompts, refs;
    std::vector<int> lens;
    for (const auto& s : seqs)
      if (s.size() > 3) {
        prompts.emplace_back(s.begin(), s.begin() + 3);
        refs.emplace_back(s.begin() + 3, s.end());
        lens.push_back(static_cast<int>(s.size()) - 3);
      }
    if (!prompts.empty()) m.bleu = corpus_bleu4(greedy_continue(logits, prompts, lens, V, seq_len, batch_size), refs);
  }
  return m;
}

EvalMetrics evaluate(const kernel::ModelState& state, const Sequences& seqs, bool with_bleu) {
  return evaluate(model_logits(state), seqs, state.config.vocab_size, state.config.seq_len, with_bleu);
}

}  // namespace trace::transformer
