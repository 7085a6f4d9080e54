#include "trace/mi/layers.hpp"

#include <cmath>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/common/rng.hpp"
#include "trace/kernel/network.hpp"

namespace trace::mi {

const std::vector<double>& PooledReps::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return vectors[i];
  throw DomainError("no representation named '" + name + "'");
}

PooledReps pooled_representations(const kernel::ModelState& state, const std::vector<std::vector<std::int32_t>>& seqs) {
  if (seqs.empty()) throw SampleSizeError("MI needs a non-empty evaluation batch");
  const auto& cfg = state.config;
  const int d = cfg.d_model;
  kernel::Network<float> net(cfg);
  const auto batch = kernel::make_feature_batch(seqs, cfg.seq_len);
  const auto trace = net.forward(state.params, batch, true, false);
  const float* E = state.params.data() + net.layout().at("tok_emb").offset;

  PooledReps r;
  r.n = static_cast<int>(seqs.size());
  r.names = {"X", "emb"};
  for (int l = 0; l < cfg.n_layers; ++l) r.names.push_back("L" + std::to_string(l));
  r.widths.assign(r.names.size(), d);
  r.vectors.assign(r.names.size(), std::vector<double>(static_cast<std::size_t>(r.n) * static_cast<std::size_t>(d), 0.0));
  for (int b = 0; b < batch.B; ++b) {
    int count = 0;
    for (int t = 0; t < batch.T; ++t) {
      const std::size_t row = static_cast<std::size_t>(b) * static_cast<std::size_t>(batch.T) + static_cast<std::size_t>(t);
      const auto id = batch.inputs[row];
      if (id < kernel::kFirstWordId) continue;
      ++count;
      double* x = &r.vectors[0][static_cast<std::size_t>(b) * static_cast<std::size_t>(d)];
      for (int c = 0; c < d; ++c) x[c] += E[static_cast<std::size_t>(id) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < trace.hidden.size(); ++k) {
        double* z = &r.vectors[k + 1][static_cast<std::size_t>(b) * static_cast<std::size_t>(d)];
        const float* h = &trace.hidden[k][row * static_cast<std::size_t>(d)];
        for (int c = 0; c < d; ++c) z[c] += h[c];
      }
    }
    if (count == 0) throw DataError("sequence " + std::to_string(b) + " has no word tokens");
    for (auto& v : r.vectors)
      for (int c = 0; c < d; ++c) v[static_cast<std::size_t>(b) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] /= count;
  }
  return r;
}

std::vector<std::pair<std::string, std::string>> mi_pairs(int L) {
  std::vector<std::pair<std::string, std::string>> p;
  p.emplace_back("emb", "L0");
  for (int l = 0; l + 1 < L; ++l) p.emplace_back("L" + std::to_string(l), "L" + std::to_string(l + 1));
  p.emplace_back("X", "emb");
  for (int l = 0; l < L; ++l) p.emplace_back("X", "L" + std::to_string(l));
  return p;
}

std::vector<MiEstimate> layer_mi(const kernel::ModelState& state, const std::vector<std::vector<std::int32_t>>& seqs,
                                 const MineConfig& cfg, std::uint64_t seed) {
  const auto reps = pooled_representations(state, seqs);
  std::vector<MiEstimate> out;
  for (const auto& [a, b] : mi_pairs(state.config.n_layers)) {
    PairedSamples s;
    s.n = reps.n;
    s.dx = state.config.d_model;
    s.dz = state.config.d_model;
    s.x = reps.at(a);
    s.z = reps.at(b);
    const std::string name = a + "->" + b;
    const auto pair_seed = mix_seed(mix_seed(seed, fnv1a(name)), static_cast<std::uint64_t>(state.step));
    auto e = mine(s, cfg, pair_seed);
    e.pair = name;
    e.step = state.step;
    out.push_back(e);
  }
  return out;
}

void append_csv(const fs::path& dir, const std::vector<MiEstimate>& es, std::uint64_t seed) {
  CsvAppender csv(dir / "mi.csv", "step,pair,estimate_nats,seed");
  for (const auto& e : es) csv.row(e.step, e.pair, e.value, seed);
  bool any = false;
  for (const auto& e : es) any = any || e.clipped;
  if (!any) return;
  CsvAppender flags(dir / "mi_flags.csv", "step,pair,clipped,seed");
  for (const auto& e : es)
    if (e.clipped) flags.row(e.step, e.pair, 1, seed);
}

}  // namespace trace::mi
