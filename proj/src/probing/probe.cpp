#include "trace/probing/probe.hpp"

#include <algorithm>
#include <cmath>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/common/rng.hpp"
#include "trace/kernel/network.hpp"

namespace trace::probing {

std::string_view to_string(Family f) { return f == Family::Pos ? "pos" : "srl"; }

Family parse_family(std::string_view s) {
  if (s == "pos") return Family::Pos;
  if (s == "srl") return Family::Srl;
  throw ConfigError("unknown probe family '" + std::string(s) + "' (expected pos or srl)");
}

int n_labels(Family f) { return f == Family::Pos ? absynth::kNumPos : absynth::kNumSrl; }

std::string label_name(Family f, int label) {
  if (label < 0 || label >= n_labels(f)) throw DomainError("label index out of range");
  return std::string(f == Family::Pos ? absynth::to_string(static_cast<absynth::Pos>(label))
                                      : absynth::to_string(static_cast<absynth::SrlLabel>(label)));
}

void ProbeConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("probe hidden_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("probe dropout must be in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("probe lr must be positive");
  if (epochs < 1) throw ConfigError("probe epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("probe batch_size must be >= 1");
}

Labels derive_labels(const absynth::SentenceRecord& r, std::size_t i) {
  if (i >= r.size()) throw DomainError("position " + std::to_string(i) + " is past the sentence end");
  return {r.pos_tags[i], absynth::srl_label(r.semantic_roles[i])};
}

std::vector<StateSet> collect_states(const kernel::ModelState& state, const transformer::Vocab& vocab,
                                     const std::vector<absynth::SentenceRecord>& records, int chunk) {
  const auto& cfg = state.config;
  kernel::Network<float> net(cfg);
  std::vector<StateSet> out(static_cast<std::size_t>(cfg.n_layers));
  for (auto& s : out) s.d = cfg.d_model;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(chunk));
    transformer::Sequences seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(vocab.encode(records[i]));
    const auto batch = kernel::make_feature_batch(seqs, cfg.seq_len);
    const auto trace = net.forward(state.params, batch, true, false);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const auto& rec = records[start + b];
      for (std::size_t i = 0; i < rec.size() && static_cast<int>(i) + 1 < batch.T; ++i) {
        const auto lab = derive_labels(rec, i);
        const std::size_t row = b * static_cast<std::size_t>(batch.T) + i + 1;
        for (std::size_t l = 0; l < out.size(); ++l) {
          const auto& h = trace.hidden[l + 1];
          out[l].states.insert(out[l].states.end(), h.begin() + static_cast<std::ptrdiff_t>(row * d),
                               h.begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
          out[l].pos.push_back(static_cast<int>(lab.pos));
          out[l].srl.push_back(static_cast<int>(lab.srl));
        }
      }
    }
  }
  return out;
}

Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  auto perm = Rng::stream(seed, "probe-split").permutation(n);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<std::uint8_t> targets(const StateSet& s, Family f, const std::vector<std::size_t>& rows) {
  const auto C = static_cast<std::size_t>(n_labels(f));
  std::vector<std::uint8_t> y(rows.size() * C, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) y[i * C + static_cast<std::size_t>(s.label(f, rows[i]))] = 1;
  return y;
}

std::vector<float> gather(const StateSet& s, const std::vector<std::size_t>& rows) {
  std::vector<float> x;
  x.reserve(rows.size() * static_cast<std::size_t>(s.d));
  for (auto r : rows) x.insert(x.end(), s.row(r), s.row(r) + s.d);
  return x;
}

Probe::Probe(int in_dim, int n_labels, const ProbeConfig& cfg)
    : net_({in_dim, cfg.hidden_dim, cfg.hidden_dim, n_labels}, cfg.dropout) {}

std::vector<float> Probe::predict(std::span<const float> states, int n) {
  if (states.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(in_dim()))
    throw DataError("probe input has the wrong size");
  std::vector<float> out;
  const int chunk = 4096;
  for (int start = 0; start < n; start += chunk) {
    const int m = std::min(chunk, n - start);
    const auto& z = net_.forward(states.data() + static_cast<std::size_t>(start) * in_dim(), m);
    for (float v : z) out.push_back(static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))));
  }
  return out;
}

Probe train_probe(std::span<const float> states, int d, std::span<const std::uint8_t> y, int C,
                  const ProbeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (d < 1 || C < 1) throw DataError("probe needs positive input and label widths");
  if (states.size() % static_cast<std::size_t>(d) != 0) throw DataError("state matrix is not n x d");
  const std::size_t n = states.size() / static_cast<std::size_t>(d);
  if (y.size() != n * static_cast<std::size_t>(C))
    throw DataError("label count (" + std::to_string(y.size() / static_cast<std::size_t>(C)) +
                    ") does not match state count (" + std::to_string(n) + ")");
  if (n == 0) throw DataError("probe training set is empty");
  Probe probe(d, C, cfg);
  Rng init = Rng::stream(seed, "probe", 0);
  probe.net().init(init);
  Rng drop = Rng::stream(seed, "probe", 1);
  kernel::AdamBuffer<float> adam;
  std::vector<float> xb, dz, grad;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = Rng::stream(seed, "probe", 2 + static_cast<std::uint64_t>(epoch)).permutation(n);
    for (std::size_t lo = 0; lo < n; lo += bs) {
      const std::size_t m = std::min(bs, n - lo);
      xb.resize(m * static_cast<std::size_t>(d));
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(states.data() + order[lo + i] * static_cast<std::size_t>(d), d,
                    xb.data() + i * static_cast<std::size_t>(d));
      const auto& z = probe.net().forward(xb.data(), static_cast<int>(m), &drop);
      dz.resize(z.size());
      // mean BCE over batch x labels: dL/dz = (sigmoid(z) - y) / (m * C)
      const float scale = 1.0f / static_cast<float>(m * static_cast<std::size_t>(C));
      for (std::size_t i = 0; i < m; ++i)
        for (int c = 0; c < C; ++c) {
          const std::size_t k = i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c);
          const float p = 1.0f / (1.0f + std::exp(-z[k]));
          dz[k] = (p - static_cast<float>(y[order[lo + i] * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)])) * scale;
        }
      probe.net().backward(dz.data(), grad);
      adam.step(probe.net().params(), grad, cfg.lr);
    }
  }
  return probe;
}

double mean_confidence(std::span<const float> out, int C, int c) {
  if (c < 0 || c >= C) throw DomainError("category index out of range");
  const std::size_t n = out.size() / static_cast<std::size_t>(C);
  if (n == 0) throw DataError("confidence needs a non-empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += out[i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
  return s / static_cast<double>(n);
}

double probe_confidence(Probe& probe, std::span<const float> states, int n, int c) {
  return mean_confidence(probe.predict(states, n), probe.n_labels(), c);
}

double ProbeReport::macro_f1() const {
  double s = 0;
  int k = 0;
  for (const auto& m : labels)
    if (m.count > 0) s += m.f1, ++k;
  return k ? s / k : 0.0;
}

double ProbeReport::macro_accuracy() const {
  double s = 0;
  int k = 0;
  for (const auto& m : labels)
    if (m.count > 0) s += m.accuracy, ++k;
  return k ? s / k : 0.0;
}

ProbeReport probe_report(std::span<const float> out, std::span<const std::uint8_t> y, int n, Family f, int layer) {
  const int C = n_labels(f);
  const auto N = static_cast<std::size_t>(n), CC = static_cast<std::size_t>(C);
  if (out.size() != N * CC || y.size() != N * CC) throw DataError("report inputs do not match n x labels");
  ProbeReport r;
  r.family = f;
  r.layer = layer;
  for (int c = 0; c < C; ++c) {
    LabelMetrics m;
    m.label = label_name(f, c);
    for (std::size_t i = 0; i < N; ++i) {
      const bool pred = out[i * CC + static_cast<std::size_t>(c)] >= 0.5f;
      const bool gold = y[i * CC + static_cast<std::size_t>(c)] != 0;
      m.count += gold;
      m.tp += pred && gold;
      m.fp += pred && !gold;
      m.fn += !pred && gold;
    }
    if (m.count > 0) {
      m.recall = static_cast<double>(m.tp) / static_cast<double>(m.count);
      m.accuracy = m.recall;
      m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
      m.f1 = m.precision > 0 && m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    }
    r.labels.push_back(m);
  }
  return r;
}

double output_category_accuracy(std::span<const std::int32_t> pred, const std::vector<bool>& valid) {
  if (pred.empty()) throw DomainError("output category accuracy over an empty position set");
  std::size_t ok = 0;
  for (auto p : pred) ok += p >= 0 && static_cast<std::size_t>(p) < valid.size() && valid[static_cast<std::size_t>(p)];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

std::vector<bool> valid_tokens(const transformer::Vocab& vocab, const std::vector<absynth::SentenceRecord>& records,
                               Family f, int c) {
  if (c < 0 || c >= n_labels(f)) throw DomainError("category index out of range");
  std::vector<bool> v(static_cast<std::size_t>(vocab.size()), false);
  if (f == Family::Pos) {
    for (int id = kernel::kFirstWordId; id < vocab.size(); ++id) v[static_cast<std::size_t>(id)] = static_cast<int>(vocab.pos(id)) == c;
    return v;
  }
  for (const auto& r : records)
    for (std::size_t i = 0; i < r.size(); ++i)
      if (static_cast<int>(absynth::srl_label(r.semantic_roles[i])) == c) {
        const auto id = vocab.id(r.tokens[i]);
        if (id >= 0) v[static_cast<std::size_t>(id)] = true;
      }
  return v;
}

std::vector<std::vector<std::int32_t>> predictions_by_category(const transformer::LogitsFn& logits,
                                                               const transformer::Vocab& vocab,
                                                               const std::vector<absynth::SentenceRecord>& records,
                                                               Family f, int seq_len, int chunk) {
  std::vector<std::vector<std::int32_t>> out(static_cast<std::size_t>(n_labels(f)));
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(chunk));
    transformer::Sequences seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(vocab.encode(records[i]));
    const auto batch = kernel::make_batch(seqs, seq_len);
    const auto pred = transformer::argmax_predictions(logits, batch, vocab.size());
    // target rows come in flat b*T+t order; the target at t is word t
    std::size_t k = 0;
    for (int r = 0; r < batch.B * batch.T; ++r) {
      if (batch.targets[static_cast<std::size_t>(r)] < 0) continue;
      const auto& rec = records[start + static_cast<std::size_t>(r / batch.T)];
      const auto lab = derive_labels(rec, static_cast<std::size_t>(r % batch.T));
      const int c = f == Family::Pos ? static_cast<int>(lab.pos) : static_cast<int>(lab.srl);
      out[static_cast<std::size_t>(c)].push_back(pred[k++]);
    }
  }
  return out;
}

void append_confidence_csv(const fs::path& dir, std::int64_t step, int layer, Family f,
                           const std::vector<double>& conf) {
  CsvAppender csv(dir / "probe_conf.csv", "step,layer,family,label,confidence");
  for (std::size_t c = 0; c < conf.size(); ++c)
    if (std::isfinite(conf[c])) csv.row(step, layer, std::string(to_string(f)), label_name(f, static_cast<int>(c)), conf[c]);
}

void write_report_csv(const fs::path& path, const std::vector<ProbeReport>& reports) {
  std::string out = "layer,family,label,count,acc,prec,rec,f1\n";
  for (const auto& r : reports)
    for (const auto& m : r.labels)
      out += std::to_string(r.layer) + "," + std::string(to_string(r.family)) + "," + m.label + "," +
             std::to_string(m.count) + "," + fmt_num(m.accuracy) + "," + fmt_num(m.precision) + "," +
             fmt_num(m.recall) + "," + fmt_num(m.f1) + "\n";
  write_file(path, out);
}

}  // namespace trace::probing
