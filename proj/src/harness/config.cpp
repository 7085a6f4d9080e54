#include "trace/harness/config.hpp"

#include <set>

#include "trace/absynth/corpus_io.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/common/rng.hpp"

namespace trace::harness {

using nlohmann::json;
using nlohmann::ordered_json;

void Diagnostics::validate() const {
  if (probe_every < 1) throw ConfigError("probe_every must be >= 1");
  if (curvature_sentences < 1 || id_sentences < 1 || mi_sentences < 4) throw ConfigError("diagnostic batch too small");
  if (lanczos_k < 1 || lanczos_iters < lanczos_k) throw ConfigError("need 1 <= lanczos_k <= lanczos_iters");
  if (hutchinson_probes < 0) throw ConfigError("hutchinson_probes must be >= 0");
  if (id_subsample < 3) throw ConfigError("id_subsample must be >= 3");
  if (probe_sentences < 0) throw ConfigError("probe_sentences must be >= 0");
  mine.validate();
  probe.validate();
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds must be distinct");
  if (preset != "small" && preset != "medium" && preset != "large")
    throw ConfigError("unknown preset '" + preset + "'");
  if (ablation != "none" && ablation != "no_ffn" && ablation != "single_head")
    throw ConfigError("unknown ablation '" + ablation + "'");
  if (out.empty()) throw ConfigError("output directory must be set");
  schedule.validate();
  diagnostics.validate();
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

ordered_json to_json(const ExperimentConfig& c) {
  const auto& s = c.schedule;
  const auto& d = c.diagnostics;
  ordered_json j;
  j["corpus"] = absynth::config_to_json(c.corpus);
  j["corpus_dir"] = c.corpus_dir;
  j["model"] = {{"preset", c.preset}, {"ablation", c.ablation}};
  j["schedule"] = {{"epochs", s.epochs},
                   {"batch_size", s.batch_size},
                   {"checkpoint_every", s.checkpoint_every},
                   {"max_steps", s.max_steps},
                   {"lr", s.adam.lr},
                   {"warmup_steps", s.adam.warmup_steps},
                   {"plateau_stop", s.plateau_stop},
                   {"plateau_window", s.plateau_window},
                   {"plateau_delta", s.plateau_delta},
                   {"plateau_smoothing", s.plateau_smoothing},
                   {"val_sentences", s.val_sentences}};
  j["diagnostics"] = {{"curvature", d.curvature},
                      {"id", d.id},
                      {"probes", d.probes},
                      {"mi", d.mi},
                      {"probe_every", d.probe_every},
                      {"curvature_sentences", d.curvature_sentences},
                      {"lanczos_k", d.lanczos_k},
                      {"lanczos_iters", d.lanczos_iters},
                      {"hutchinson_probes", d.hutchinson_probes},
                      {"id_sentences", d.id_sentences},
                      {"id_subsample", d.id_subsample},
                      {"mi_sentences", d.mi_sentences},
                      {"mine_steps", d.mine.steps},
                      {"probe_sentences", d.probe_sentences},
                      {"probe_epochs", d.probe.epochs}};
  j["seeds"] = c.seeds;
  j["out"] = c.out;
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, {"corpus", "corpus_dir", "model", "schedule", "diagnostics", "seeds", "out"}, "config");
  if (j.contains("corpus")) c.corpus = absynth::config_from_json(j.at("corpus"));
  get(j, "corpus_dir", c.corpus_dir);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"preset", "ablation"}, "model");
    get(m, "preset", c.preset);
    get(m, "ablation", c.ablation);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, {"epochs", "batch_size", "checkpoint_every", "max_steps", "lr", "warmup_steps", "plateau_stop",
                   "plateau_window", "plateau_delta", "plateau_smoothing", "val_sentences"},
               "schedule");
    auto& t = c.schedule;
    get(s, "epochs", t.epochs);
    get(s, "batch_size", t.batch_size);
    get(s, "checkpoint_every", t.checkpoint_every);
    get(s, "max_steps", t.max_steps);
    get(s, "lr", t.adam.lr);
    get(s, "warmup_steps", t.adam.warmup_steps);
    get(s, "plateau_stop", t.plateau_stop);
    get(s, "plateau_window", t.plateau_window);
    get(s, "plateau_delta", t.plateau_delta);
    get(s, "plateau_smoothing", t.plateau_smoothing);
    get(s, "val_sentences", t.val_sentences);
  }
  if (j.contains("diagnostics")) {
    const auto& s = j.at("diagnostics");
    check_keys(s, {"curvature", "id", "probes", "mi", "probe_every", "curvature_sentences", "lanczos_k",
                   "lanczos_iters", "hutchinson_probes", "id_sentences", "id_subsample", "mi_sentences",
                   "mine_steps", "probe_sentences", "probe_epochs"},
               "diagnostics");
    auto& d = c.diagnostics;
    get(s, "curvature", d.curvature);
    get(s, "id", d.id);
    get(s, "probes", d.probes);
    get(s, "mi", d.mi);
    get(s, "probe_every", d.probe_every);
    get(s, "curvature_sentences", d.curvature_sentences);
    get(s, "lanczos_k", d.lanczos_k);
    get(s, "lanczos_iters", d.lanczos_iters);
    get(s, "hutchinson_probes", d.hutchinson_probes);
    get(s, "id_sentences", d.id_sentences);
    get(s, "id_subsample", d.id_subsample);
    get(s, "mi_sentences", d.mi_sentences);
    get(s, "mine_steps", d.mine.steps);
    get(s, "probe_sentences", d.probe_sentences);
    get(s, "probe_epochs", d.probe.epochs);
  }
  get(j, "seeds", c.seeds);
  get(j, "out", c.out);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("out");
  return hex64(fnv1a(j.dump()));
}

}  // namespace trace::harness
