#include "trace/harness/run.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "trace/absynth/corpus_io.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/curvature/analysis.hpp"
#include "trace/geometry/transition.hpp"
#include "trace/geometry/twonn.hpp"
#include "trace/mi/layers.hpp"
#include "trace/probing/probe.hpp"
#include "trace/transformer/evaluate.hpp"
#include "trace/transformer/model.hpp"

namespace trace::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

struct PhaseTimer {
  std::map<std::string, double>& sink;
  std::string name;
  Clock::time_point t0 = Clock::now();
  ~PhaseTimer() { sink[name] += std::chrono::duration<double>(Clock::now() - t0).count(); }
};

// metric streams written per seed, with their key and value columns
struct Stream {
  const char* file;
  std::vector<std::string> keys, values;
};

const std::vector<Stream>& streams() {
  static const std::vector<Stream> s{
      {"checkpoints.csv", {"step"}, {"val_token_acc", "smoothed"}},
      {"curvature.csv", {"step"}, {"trace", "eff_rank", "complexity"}},
      {"curvature_hutchinson.csv", {"step"}, {"trace_estimate"}},
      {"id.csv", {"step", "layer"}, {"id"}},
      {"id_avg.csv", {"step"}, {"avg_id"}},
      {"mi.csv", {"step", "pair"}, {"estimate_nats"}},
      {"probe_conf.csv", {"step", "layer", "family", "label"}, {"confidence"}},
      {"output_acc.csv", {"step", "family", "label"}, {"accuracy"}},
  };
  return s;
}

const char* kLoss = "loss.csv";
const char* kProgress = "progress.json";
const char* kCheckpoint = "checkpoint.bin";

transformer::Sequences head(const transformer::Sequences& s, int n) {
  return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(s.size(), static_cast<std::size_t>(n)))};
}

void write_progress(const fs::path& dir, const transformer::TrainProgress& p, std::int64_t step, bool complete,
                    const std::string& reason) {
  ordered_json j;
  j["step"] = step;
  j["complete"] = complete;
  j["stop_reason"] = reason;
  j["initial_loss"] = p.initial_loss;
  j["divergent_run"] = p.divergent_run;
  j["smoothed"] = p.smoothed;
  write_file(dir / kProgress, j.dump(1) + "\n");
}

void run_probes(const kernel::ModelState& state, const transformer::Vocab& vocab, const absynth::Corpus& corpus,
                const Diagnostics& d, std::uint64_t seed, const fs::path& dir) {
  std::vector<absynth::SentenceRecord> recs = corpus.val;
  if (d.probe_sentences > 0 && recs.size() > static_cast<std::size_t>(d.probe_sentences))
    recs.resize(static_cast<std::size_t>(d.probe_sentences));
  const auto sets = probing::collect_states(state, vocab, recs);
  const auto split = probing::split_rows(sets.front().size(), 0.8, seed);
  std::vector<probing::ProbeReport> reports;
  for (auto family : {probing::Family::Pos, probing::Family::Srl}) {
    const int C = probing::n_labels(family);
    for (std::size_t l = 0; l < sets.size(); ++l) {
      const auto& s = sets[l];
      const auto xtr = probing::gather(s, split.train);
      const auto ytr = probing::targets(s, family, split.train);
      const auto probe_seed = mix_seed(mix_seed(seed, fnv1a(probing::to_string(family))), l);
      auto probe = probing::train_probe(xtr, s.d, ytr, C, d.probe, mix_seed(probe_seed, static_cast<std::uint64_t>(state.step)));
      const auto xte = probing::gather(s, split.test);
      const auto yte = probing::targets(s, family, split.test);
      const int n = static_cast<int>(split.test.size());
      const auto out = probe.predict(xte, n);
      reports.push_back(probing::probe_report(out, yte, n, family, static_cast<int>(l)));
      // confidence for c over held-out tokens whose gold label is c
      std::vector<double> conf(static_cast<std::size_t>(C), std::numeric_limits<double>::quiet_NaN());
      for (int c = 0; c < C; ++c) {
        double sum = 0;
        std::int64_t cnt = 0;
        for (int i = 0; i < n; ++i)
          if (yte[static_cast<std::size_t>(i * C + c)]) sum += out[static_cast<std::size_t>(i * C + c)], ++cnt;
        if (cnt > 0) conf[static_cast<std::size_t>(c)] = sum / static_cast<double>(cnt);
      }
      probing::append_confidence_csv(dir, state.step, static_cast<int>(l), family, conf);
    }
    const auto logits = transformer::model_logits(state);
    const auto by = probing::predictions_by_category(logits, vocab, recs, family, state.config.seq_len);
    CsvAppender acc(dir / "output_acc.csv", "step,family,label,accuracy");
    for (int c = 0; c < C; ++c) {
      if (by[static_cast<std::size_t>(c)].empty()) continue;
      const auto valid = probing::valid_tokens(vocab, corpus.train, family, c);
      acc.row(state.step, std::string(probing::to_string(family)), probing::label_name(family, c),
              probing::output_category_accuracy(by[static_cast<std::size_t>(c)], valid));
    }
  }
  fs::create_directories(dir / "probes");
  probing::write_report_csv(dir / "probes" / ("report_" + std::to_string(state.step) + ".csv"), reports);
  probing::write_report_csv(dir / "probe_report.csv", reports);
}

void write_transition(const fs::path& dir, const Diagnostics& d) {
  const auto path = dir / "transition.json";
  if (!d.curvature || !d.id) {
    write_file(path, "{\"step\": null, \"available\": false, \"reason\": \"curvature or id disabled\"}\n");
    return;
  }
  auto series = [&](const char* file, const char* col) {
    const auto t = read_csv(dir / file);
    geometry::MetricSeries s;
    const int ic = t.column(col), is = t.column("step");
    for (const auto& r : t.rows) {
      s.steps.push_back(std::stoll(r[static_cast<std::size_t>(is)]));
      s.values.push_back(std::stod(r[static_cast<std::size_t>(ic)]));
    }
    return s;
  };
  try {
    const auto ev = geometry::detect_phase_transition(series("curvature.csv", "complexity"), series("id_avg.csv", "avg_id"));
    geometry::write_transition_json(path, ev);
  } catch (const AlignmentError& e) {
    ordered_json j;
    j["step"] = nullptr;
    j["available"] = false;
    j["reason"] = e.what();
    write_file(path, j.dump(1) + "\n");
  }
}

}  // namespace

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["tool"] = "trace";
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["status"] = status;
  j["config"] = config;
  j["seeds"] = ordered_json::array();
  for (const auto& s : seeds)
    j["seeds"].push_back({{"seed", s.seed},
                          {"status", s.status},
                          {"error", s.error},
                          {"stop_reason", s.stop_reason},
                          {"final_step", s.final_step}});
  j["phase_seconds"] = phase_seconds;
  j["artifacts"] = artifacts;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.config = j.at("config");
    for (const auto& s : j.at("seeds")) {
      SeedOutcome o;
      o.seed = s.at("seed").get<std::uint64_t>();
      o.status = s.at("status").get<std::string>();
      o.error = s.at("error").get<std::string>();
      o.stop_reason = s.at("stop_reason").get<std::string>();
      o.final_step = s.at("final_step").get<std::int64_t>();
      m.seeds.push_back(o);
    }
    m.phase_seconds = j.at("phase_seconds").get<std::map<std::string, double>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& run_dir) {
  const auto p = run_dir / "manifest.json";
  if (!fs::exists(p)) throw IoError("no manifest in " + run_dir.string());
  try {
    return from_json(json::parse(read_file(p)));
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

std::vector<std::string> verify_manifest(const RunManifest& m, const fs::path& run_dir) {
  std::vector<std::string> bad;
  for (const auto& [rel, sum] : m.artifacts) {
    const auto p = run_dir / rel;
    if (!fs::exists(p))
      bad.push_back(rel + ": missing");
    else if (file_checksum(p) != sum)
      bad.push_back(rel + ": checksum mismatch");
  }
  return bad;
}

absynth::Corpus prepare_corpus(const ExperimentConfig& cfg) {
  if (!cfg.corpus_dir.empty()) return absynth::load_corpus(cfg.corpus_dir);
  const fs::path dir = fs::path(cfg.out) / "corpus";
  if (fs::exists(dir / "meta.json")) {
    auto c = absynth::load_corpus(dir);
    if (absynth::config_to_json(c.config) == absynth::config_to_json(cfg.corpus)) return c;
  }
  auto c = absynth::generate_corpus(cfg.corpus);
  absynth::write_corpus(c, dir);
  return c;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, const absynth::Corpus& corpus, std::uint64_t seed,
                     const fs::path& dir, std::map<std::string, double>& phases, const RunHooks& hooks) {
  SeedOutcome outcome;
  outcome.seed = seed;
  const auto& d = cfg.diagnostics;
  const transformer::Vocab vocab(corpus.lexicon);
  transformer::TrainData data;
  for (const auto& r : corpus.train) data.train.push_back(vocab.encode(r));
  for (const auto& r : corpus.val) data.val.push_back(vocab.encode(r));
  transformer::Sequences test;
  for (const auto& r : corpus.test) test.push_back(vocab.encode(r));

  auto mc = transformer::preset(cfg.preset, vocab.size());
  if (cfg.ablation != "none") mc = transformer::ablate(mc, cfg.ablation);

  kernel::ModelState state;
  transformer::TrainProgress progress;
  if (fs::exists(dir / kProgress)) {
    const auto j = json::parse(read_file(dir / kProgress));
    if (j.at("complete").get<bool>()) {
      outcome.status = "complete";
      outcome.stop_reason = j.at("stop_reason").get<std::string>();
      outcome.final_step = j.at("step").get<std::int64_t>();
      return outcome;
    }
    state = transformer::load_checkpoint(dir / kCheckpoint);
    if (transformer::config_to_json(state.config) != transformer::config_to_json(mc))
      throw ConfigError("checkpoint in " + dir.string() + " has a different model config");
    progress.initial_loss = j.at("initial_loss").get<double>();
    progress.divergent_run = j.at("divergent_run").get<std::int64_t>();
    progress.smoothed = j.at("smoothed").get<std::vector<double>>();
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".csv") truncate_csv_after(entry.path(), state.step);
  } else {
    fs::remove_all(dir);
    fs::create_directories(dir);
    state = kernel::init_state(mc, seed);
  }

  const auto curv_batch = kernel::make_batch(head(data.val, d.curvature_sentences), mc.seq_len);
  const auto id_batch = kernel::make_feature_batch(head(data.val, d.id_sentences), mc.seq_len);
  const auto mi_seqs = head(data.val, d.mi_sentences);
  curvature::CurvatureOptions copt;
  copt.k = d.lanczos_k;
  copt.iters = d.lanczos_iters;
  copt.seed = seed;
  copt.hutchinson_probes = d.hutchinson_probes;

  // mirrors the trainer's bookkeeping so a checkpoint can persist it
  auto mirror = progress;
  const auto& sch = cfg.schedule;
  CsvAppender loss(dir / kLoss, "step,loss,token_acc");

  auto on_step = [&](const transformer::StepRecord& r) {
    loss.row(r.step, r.loss, r.token_acc);
    if (mirror.initial_loss < 0) mirror.initial_loss = r.loss;
    mirror.divergent_run = r.loss > sch.divergence_factor * mirror.initial_loss ? mirror.divergent_run + 1 : 0;
  };
  auto on_checkpoint = [&](const kernel::ModelState& s, const transformer::CheckpointInfo& ci) {
    mirror.smoothed.push_back(ci.smoothed);
    CsvAppender(dir / "checkpoints.csv", "step,val_token_acc,smoothed").row(ci.step, ci.val_token_acc, ci.smoothed);
    if (d.curvature) {
      PhaseTimer t{phases, "curvature"};
      curvature::append_csv(dir, curvature::analyse(s, curv_batch, copt), d.hutchinson_probes);
    }
    if (d.id) {
      PhaseTimer t{phases, "id"};
      geometry::append_csv(dir, geometry::layer_ids(s, id_batch, static_cast<std::size_t>(d.id_subsample), seed));
    }
    if (d.mi) {
      PhaseTimer t{phases, "mi"};
      mi::append_csv(dir, mi::layer_mi(s, mi_seqs, d.mine, seed), seed);
    }
    if (d.probes && s.step % d.probe_every == 0) {
      PhaseTimer t{phases, "probes"};
      run_probes(s, vocab, corpus, d, seed, dir);
    }
    transformer::save_checkpoint(s, dir / kCheckpoint);
    write_progress(dir, mirror, s.step, false, "");
    if (hooks.after_checkpoint) hooks.after_checkpoint(seed, s.step);
  };

  auto diag_seconds = [&] {
    double s = 0;
    for (const char* k : {"curvature", "id", "mi", "probes"}) s += phases[k];
    return s;
  };
  const double diag0 = diag_seconds();
  const auto t_train = Clock::now();
  const auto res = transformer::train(state, data, sch, progress, on_step, on_checkpoint);
  phases["training"] += std::chrono::duration<double>(Clock::now() - t_train).count() - (diag_seconds() - diag0);
  outcome.stop_reason = transformer::to_string(res.reason);
  outcome.final_step = state.step;

  {
    PhaseTimer t{phases, "evaluation"};
    const auto m = transformer::evaluate(state, test, true);
    ordered_json j;
    j["step"] = state.step;
    j["stop_reason"] = outcome.stop_reason;
    j["token_accuracy"] = m.token_accuracy;
    j["perplexity"] = m.perplexity;
    j["exact_match"] = m.exact_match;
    j["bleu"] = m.bleu;
    j["n_sequences"] = m.n_sequences;
    j["n_tokens"] = m.n_tokens;
    write_file(dir / "eval.json", j.dump(1) + "\n");
  }
  write_transition(dir, d);
  transformer::save_checkpoint(state, dir / "final.bin");
  fs::remove(dir / kCheckpoint);
  write_progress(dir, res.progress, state.step, true, outcome.stop_reason);
  outcome.status = "complete";
  return outcome;
}

void write_mean_csv(const std::vector<fs::path>& files, const std::vector<std::string>& keys,
                    const std::vector<std::string>& values, const fs::path& out) {
  if (files.empty()) throw DataError("no seed files to average");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> acc;  // key -> per value column samples
  std::map<std::string, int> seen;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto t = read_csv(files[f]);
    std::vector<int> kc, vc;
    for (const auto& k : keys) kc.push_back(t.column(k));
    for (const auto& v : values) vc.push_back(t.column(v));
    std::set<std::string> in_file;
    for (const auto& r : t.rows) {
      std::string key;
      for (std::size_t i = 0; i < kc.size(); ++i) key += (i ? "," : "") + r[static_cast<std::size_t>(kc[i])];
      if (!in_file.insert(key).second) continue;
      if (f == 0) order.push_back(key);
      auto& a = acc[key];
      a.resize(values.size());
      for (std::size_t i = 0; i < vc.size(); ++i) a[i].push_back(std::stod(r[static_cast<std::size_t>(vc[i])]));
      ++seen[key];
    }
  }
  std::string text;
  for (const auto& k : keys) text += k + ",";
  text += "metric,mean,std,n\n";
  for (const auto& key : order) {
    if (seen[key] != static_cast<int>(files.size())) continue;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& xs = acc[key][i];
      double m = 0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double v = 0;
      for (double x : xs) v += (x - m) * (x - m);
      const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
      text += key + "," + values[i] + "," + fmt_num(m) + "," + fmt_num(sd) + "," + std::to_string(xs.size()) + "\n";
    }
  }
  write_file(out, text);
}

void write_seed_means(const fs::path& run_dir, const std::vector<std::uint64_t>& seeds) {
  for (const auto& s : streams()) {
    std::vector<fs::path> files;
    for (auto seed : seeds) {
      const auto p = run_dir / seed_dir_name(seed) / s.file;
      if (fs::exists(p)) files.push_back(p);
    }
    if (files.size() != seeds.size() || files.empty()) continue;
    auto name = fs::path(s.file).stem().string() + "_mean.csv";
    write_mean_csv(files, s.keys, s.values, run_dir / name);
  }
}

RunManifest run_experiment(const ExperimentConfig& cfg, RunMode mode, const RunHooks& hooks) {
  cfg.validate();
  const fs::path out = cfg.out;
  const auto hash = config_hash(cfg);
  if (fs::exists(out / "manifest.json")) {
    const auto prev = RunManifest::load(out);
    if (mode == RunMode::Fresh)
      throw ConfigError("run directory " + out.string() + " already holds run " + prev.config_hash +
                        " (status " + prev.status + "); pass --force to start over or --resume to continue");
    if (mode == RunMode::Resume && prev.config_hash != hash)
      throw ConfigError("cannot resume: run directory holds config " + prev.config_hash + ", this config is " + hash);
  }
  if (mode == RunMode::Force && fs::exists(out)) {
    for (const auto& e : fs::directory_iterator(out))
      if (e.path().filename() != "corpus" || !cfg.corpus_dir.empty()) fs::remove_all(e.path());
  }
  fs::create_directories(out);

  RunManifest m;
  m.config_hash = hash;
  m.config = to_json(cfg);
  const auto t0 = Clock::now();
  auto save = [&] { write_file(out / "manifest.json", m.to_json().dump(1) + "\n"); };
  for (auto s : cfg.seeds) {
    SeedOutcome o;
    o.seed = s;
    m.seeds.push_back(o);
  }
  save();

  absynth::Corpus corpus;
  {
    PhaseTimer t{m.phase_seconds, "corpus"};
    corpus = prepare_corpus(cfg);
  }
  for (auto& o : m.seeds) {
    try {
      o = run_seed(cfg, corpus, o.seed, out / seed_dir_name(o.seed), m.phase_seconds, hooks);
    } catch (const std::exception& e) {
      o.status = "failed";
      o.error = e.what();
    }
    save();
  }
  bool all = true;
  for (const auto& o : m.seeds) all = all && o.status == "complete";
  if (all) {
    PhaseTimer t{m.phase_seconds, "averaging"};
    write_seed_means(out, cfg.seeds);
  }
  m.status = all ? "complete" : "partial";
  m.phase_seconds["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    m.artifacts[fs::relative(e.path(), out).generic_string()] = file_checksum(e.path());
  }
  save();
  return m;
}

}  // namespace trace::harness
