#include "trace/kernel/model.hpp"

#include <algorithm>

#include "trace/common/error.hpp"
#include "trace/common/rng.hpp"

namespace trace::kernel {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1) throw ConfigError("d_model and n_heads must be positive");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (use_ffn && d_ffn < 1) throw ConfigError("d_ffn must be positive");
  if (seq_len < 1) throw ConfigError("seq_len must be positive");
  if (vocab_size < 3) throw ConfigError("vocab_size must cover PAD, BOS and one word");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t ParamBlock::size() const {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void ParamLayout::add(const std::string& name, std::vector<std::size_t> shape) {
  ParamBlock b{name, total_, std::move(shape)};
  total_ += b.size();
  index_[name] = blocks_.size();
  blocks_.push_back(std::move(b));
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.d_ffn);
  add("tok_emb", {static_cast<std::size_t>(c.vocab_size), d});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gamma", {d});
    add(p + "ln1.beta", {d});
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      add(p + "attn." + w, {d, d});
      add(p + "attn.b" + std::string(1, w[1]), {d});
    }
    if (c.use_ffn) {
      add(p + "ln2.gamma", {d});
      add(p + "ln2.beta", {d});
      add(p + "ffn.w1", {d, f});
      add(p + "ffn.b1", {f});
      add(p + "ffn.w2", {f, d});
      add(p + "ffn.b2", {d});
    }
  }
  if (c.pre_norm) {
    add("ln_f.gamma", {d});
    add("ln_f.beta", {d});
  }
}

const ParamBlock& ParamLayout::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter block " + name);
  return blocks_[it->second];
}

template <class T>
std::vector<T> ParamLayout::flatten(const std::map<std::string, std::vector<T>>& parts) const {
  std::vector<T> flat(total_);
  for (const auto& b : blocks_) {
    const auto it = parts.find(b.name);
    if (it == parts.end()) throw DataError("missing parameter block " + b.name);
    if (it->second.size() != b.size()) throw DataError("wrong size for parameter block " + b.name);
    std::copy(it->second.begin(), it->second.end(), flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return flat;
}

template std::vector<float> ParamLayout::flatten(const std::map<std::string, std::vector<float>>&) const;
template std::vector<double> ParamLayout::flatten(const std::map<std::string, std::vector<double>>&) const;

int Batch::n_targets() const {
  return static_cast<int>(std::count_if(targets.begin(), targets.end(), [](auto t) { return t >= 0; }));
}

namespace {

Batch build(const std::vector<std::vector<std::int32_t>>& seqs, int seq_len, bool feature) {
  Batch b;
  b.B = static_cast<int>(seqs.size());
  int tmax = 1;
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) > seq_len && !feature)
      throw DataError("sequence of length " + std::to_string(s.size()) + " exceeds seq_len " +
                      std::to_string(seq_len));
    const int len = feature ? std::min(static_cast<int>(s.size()) + 1, seq_len) : static_cast<int>(s.size());
    tmax = std::max(tmax, len);
  }
  b.T = tmax;
  b.inputs.assign(static_cast<std::size_t>(b.B * b.T), kPad);
  b.targets.assign(static_cast<std::size_t>(b.B * b.T), -1);
  for (int r = 0; r < b.B; ++r) {
    const auto& s = seqs[static_cast<std::size_t>(r)];
    const int n = static_cast<int>(s.size());
    auto* in = &b.inputs[static_cast<std::size_t>(r * b.T)];
    auto* tg = &b.targets[static_cast<std::size_t>(r * b.T)];
    for (int t = 0; t < b.T; ++t) {
      const bool has_input = feature ? t <= n : t < n;
      if (has_input) in[t] = t == 0 ? kBos : s[static_cast<std::size_t>(t - 1)];
      if (t < n && has_input) tg[t] = s[static_cast<std::size_t>(t)];
    }
  }
  return b;
}

}  // namespace

Batch make_batch(const std::vector<std::vector<std::int32_t>>& seqs, int seq_len) {
  return build(seqs, seq_len, false);
}

Batch make_feature_batch(const std::vector<std::vector<std::int32_t>>& seqs, int seq_len) {
  return build(seqs, seq_len, true);
}

ModelState init_state(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState s;
  s.config = cfg;
  s.seed = seed;
  const ParamLayout layout(cfg);
  s.params.assign(layout.total(), 0.0f);
  Rng rng = Rng::stream(seed, "init");
  for (const auto& b : layout.blocks()) {
    float* p = s.params.data() + b.offset;
    const bool gain = b.name.ends_with(".gamma");
    const bool matrix = b.shape.size() == 2;
    for (std::size_t i = 0; i < b.size(); ++i)
      p[i] = gain ? 1.0f : matrix ? static_cast<float>(0.02 * rng.normal()) : 0.0f;
  }
  s.adam_m.assign(layout.total(), 0.0f);
  s.adam_v.assign(layout.total(), 0.0f);
  return s;
}

std::size_t parameter_count(const ModelConfig& cfg) { return ParamLayout(cfg).total(); }

}  // namespace trace::kernel
