#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trace/absynth/types.hpp"
#include "trace/kernel/mlp.hpp"
#include "trace/kernel/model.hpp"
#include "trace/transformer/evaluate.hpp"
#include "trace/transformer/model.hpp"

namespace trace::probing {

enum class Family { Pos, Srl };
std::string_view to_string(Family f);
Family parse_family(std::string_view s);
int n_labels(Family f);
std::string label_name(Family f, int label);

struct ProbeConfig {
  int hidden_dim = 256;
  double dropout = 0.5;
  double lr = 1e-4;
  int epochs = 30;
  int batch_size = 64;
  void validate() const;
};

struct Labels {
  absynth::Pos pos;
  absynth::SrlLabel srl;
};

/// Gold labels of one token, read from the record's annotations.
Labels derive_labels(const absynth::SentenceRecord& record, std::size_t position);

/// Token-level hidden states of one layer with their gold labels.
struct StateSet {
  int d = 0;
  std::vector<float> states;  // n x d
  std::vector<int> pos;       // Pos index per row
  std::vector<int> srl;       // SrlLabel index per row
  std::size_t size() const { return pos.size(); }
  const float* row(std::size_t i) const { return states.data() + i * static_cast<std::size_t>(d); }
  int label(Family f, std::size_t i) const { return f == Family::Pos ? pos[i] : srl[i]; }
};

/// One StateSet per transformer layer (layer l = output of block l). Word i of a
/// sentence is read at input position i+1 of [BOS, w1..wn]. The model is not modified.
std::vector<StateSet> collect_states(const kernel::ModelState& state, const transformer::Vocab& vocab,
                                     const std::vector<absynth::SentenceRecord>& records, int chunk = 256);

/// Seeded split of row indices into train (fraction) and test.
struct Split {
  std::vector<std::size_t> train, test;
};
Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed);

/// Multi-hot targets [n x C] for the given rows of a state set.
std::vector<std::uint8_t> targets(const StateSet& s, Family f, const std::vector<std::size_t>& rows);

/// Rows of a state set gathered into a contiguous matrix.
std::vector<float> gather(const StateSet& s, const std::vector<std::size_t>& rows);

class Probe {
 public:
  Probe() = default;
  Probe(int in_dim, int n_labels, const ProbeConfig& cfg);

  /// Sigmoid outputs [n x C], evaluation mode.
  std::vector<float> predict(std::span<const float> states, int n);

  kernel::Mlp<float>& net() { return net_; }
  int n_labels() const { return net_.out_dim(); }
  int in_dim() const { return net_.in_dim(); }

 private:
  kernel::Mlp<float> net_;
};

/// BCE training of a fresh probe on states [n x d] with multi-hot targets [n x C].
Probe train_probe(std::span<const float> states, int d, std::span<const std::uint8_t> targets, int n_labels,
                  const ProbeConfig& cfg, std::uint64_t seed);

/// Mean sigmoid output of category c over a batch.
double probe_confidence(Probe& probe, std::span<const float> states, int n, int category);
double mean_confidence(std::span<const float> outputs, int n_labels, int category);

struct LabelMetrics {
  std::string label;
  std::int64_t count = 0;  // positives in the split
  std::int64_t tp = 0, fp = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

struct ProbeReport {
  Family family = Family::Pos;
  int layer = 0;
  std::vector<LabelMetrics> labels;
  /// Means over labels present in the split.
  double macro_f1() const;
  double macro_accuracy() const;
};

/// Per-label metrics at threshold 0.5. "accuracy" is accuracy on the positive
/// instances (equal to recall); absent labels report zeros with count 0.
ProbeReport probe_report(std::span<const float> outputs, std::span<const std::uint8_t> targets, int n, Family f,
                         int layer);

/// Fraction of predictions in the valid set; empty input is a domain error.
double output_category_accuracy(std::span<const std::int32_t> predictions, const std::vector<bool>& valid);

/// Valid token set f(y) for a category: tokens whose lexicon POS is c, or for
/// SRL the tokens observed with role c anywhere in `records`.
std::vector<bool> valid_tokens(const transformer::Vocab& vocab, const std::vector<absynth::SentenceRecord>& records,
                               Family f, int category);

/// Greedy next-token predictions grouped by the gold category of the target
/// token: result[c] lists predictions at positions whose target carries label c.
std::vector<std::vector<std::int32_t>> predictions_by_category(const transformer::LogitsFn& logits,
                                                               const transformer::Vocab& vocab,
                                                               const std::vector<absynth::SentenceRecord>& records,
                                                               Family f, int seq_len = 16, int chunk = 128);

void append_confidence_csv(const std::filesystem::path& dir, std::int64_t step, int layer, Family f,
                           const std::vector<double>& confidence);
void write_report_csv(const std::filesystem::path& path, const std::vector<ProbeReport>& reports);

}  // namespace trace::probing
