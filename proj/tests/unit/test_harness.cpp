#include "doctest.h"
#include "fixtures.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/harness/config.hpp"
#include "trace/harness/report.hpp"
#include "trace/harness/run.hpp"

using namespace trace;
using namespace trace::harness;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("trace_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.corpus = fixtures::tiny_corpus_config(200, 4, 7);
  c.preset = "small";
  c.schedule.epochs = 100;
  c.schedule.batch_size = 16;
  c.schedule.checkpoint_every = 2;
  c.schedule.max_steps = 20;
  c.schedule.val_sentences = 20;
  auto& d = c.diagnostics;
  d.curvature_sentences = 6;
  d.lanczos_k = 3;
  d.lanczos_iters = 6;
  d.id_sentences = 20;
  d.id_subsample = 60;
  d.mi_sentences = 20;
  d.mine.steps = 10;
  d.mine.batch_size = 8;
  d.probe_every = 10;
  d.probe.epochs = 2;
  d.probe.hidden_dim = 16;
  c.seeds = {1, 2};
  c.out = out.string();
  return c;
}

// every metric CSV under a run, relative path -> bytes
std::map<std::string, std::string> csvs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("config round trip, hash and validation") {
  const auto c = tiny("cfg");
  const auto j = to_json(c);
  const auto back = from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  CHECK(config_hash(back) == config_hash(c));
  auto moved = c;
  moved.out = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  auto other = c;
  other.schedule.max_steps = 21;
  CHECK(config_hash(other) != config_hash(c));

  auto bad = nlohmann::json::parse(j.dump());
  bad["diagnostics"]["curvatur"] = true;
  CHECK_THROWS_AS(from_json(bad), ConfigError);
  auto empty = nlohmann::json::parse(j.dump());
  empty["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(from_json(empty), ConfigError);
  auto zero = nlohmann::json::parse(j.dump());
  zero["schedule"]["checkpoint_every"] = 0;
  CHECK_THROWS_AS(from_json(zero), ConfigError);
  auto preset = nlohmann::json::parse(j.dump());
  preset["model"]["preset"] = "tiny";
  CHECK_THROWS_AS(from_json(preset), ConfigError);
  CHECK(ExperimentConfig{}.seeds.size() == 5);
  CHECK(ExperimentConfig{}.schedule.checkpoint_every == 500);
}

TEST_CASE("two seeds with curvature and id, refusal, force and determinism") {
  const auto dir = scratch("basic");
  auto c = tiny(dir);
  const auto m = run_experiment(c, RunMode::Fresh);
  CHECK(m.status == "complete");
  CHECK(verify_manifest(m, dir).empty());
  for (const char* f : {"curvature.csv", "id.csv", "id_avg.csv", "transition.json", "loss.csv", "eval.json"}) {
    CHECK(fs::exists(dir / "seed_1" / f));
    CHECK(fs::exists(dir / "seed_2" / f));
  }
  CHECK_FALSE(fs::exists(dir / "seed_1" / "mi.csv"));
  for (const char* f : {"curvature_mean.csv", "id_mean.csv", "id_avg_mean.csv", "checkpoints_mean.csv"})
    CHECK(fs::exists(dir / f));
  // seed average has one row per checkpoint and metric
  const auto per_seed = read_csv(dir / "seed_1" / "id_avg.csv");
  CHECK(per_seed.rows.size() == 11);
  CHECK(read_csv(dir / "id_avg_mean.csv").rows.size() == per_seed.rows.size());
  CHECK(read_csv(dir / "curvature_mean.csv").rows.size() == 3 * per_seed.rows.size());
  CHECK(m.phase_seconds.count("curvature") == 1);
  CHECK(m.seeds[0].stop_reason == "max_steps");

  CHECK_THROWS_AS(run_experiment(c, RunMode::Fresh), ConfigError);
  const auto before = csvs(dir);
  run_experiment(c, RunMode::Force);
  CHECK(csvs(dir) == before);

  const auto other = scratch("basic_copy");
  c.out = other.string();
  run_experiment(c, RunMode::Fresh);
  CHECK(csvs(other) == before);
  CHECK(read_file(dir / "seed_2" / "transition.json") == read_file(other / "seed_2" / "transition.json"));

  // tampering is caught
  write_file(dir / "seed_1" / "id.csv", "step,layer,id\n");
  CHECK_FALSE(verify_manifest(RunManifest::load(dir), dir).empty());
  CHECK_THROWS_AS(emit_report(dir), DataError);
  fs::remove_all(dir);
  fs::remove_all(other);
}

TEST_CASE("a crashed run resumes without duplicate rows") {
  const auto ref_dir = scratch("ref");
  auto c = tiny(ref_dir);
  c.seeds = {3};
  c.diagnostics.mi = true;
  c.diagnostics.probes = true;
  run_experiment(c, RunMode::Fresh);

  const auto dir = scratch("crash");
  c.out = dir.string();
  RunHooks crash;
  crash.after_checkpoint = [](std::uint64_t, std::int64_t step) {
    if (step == 12) throw std::runtime_error("simulated crash");
  };
  const auto partial = run_experiment(c, RunMode::Fresh, crash);
  CHECK(partial.status == "partial");
  CHECK(partial.seeds[0].status == "failed");
  CHECK(partial.seeds[0].error == "simulated crash");

  auto changed = c;
  changed.schedule.max_steps = 30;
  CHECK_THROWS_AS(run_experiment(changed, RunMode::Resume), ConfigError);
  const auto done = run_experiment(c, RunMode::Resume);
  CHECK(done.status == "complete");
  const auto a = csvs(ref_dir), b = csvs(dir);
  CHECK(a.size() == b.size());
  for (const auto& [k, v] : a) {
    INFO(k);
    CHECK(b.at(k) == v);
  }
  CHECK(fs::exists(dir / "seed_3" / "probes" / "report_0.csv"));
  CHECK(fs::exists(dir / "seed_3" / "probes" / "report_20.csv"));
  fs::remove_all(ref_dir);
  fs::remove_all(dir);
}

TEST_CASE("report bundle") {
  const auto dir = scratch("report");
  auto c = tiny(dir);
  c.seeds = {4, 5};
  c.diagnostics.mi = true;
  c.diagnostics.probes = true;
  run_experiment(c, RunMode::Fresh);
  const auto r = emit_report(dir);
  CHECK(r.gaps.empty());
  const auto& s = r.summary;
  CHECK(s["final_metrics"]["token_accuracy"]["n"] == 2);
  CHECK(s["final_metrics"]["perplexity"]["mean"].get<double>() > 1.0);
  CHECK(s["seeds"][0].contains("transition_step"));
  CHECK(s["transition"]["of"] == 2);
  CHECK_FALSE(s["probe_table"].empty());
  const auto t = read_csv(dir / "report" / "long.csv");
  CHECK(t.header == std::vector<std::string>{"step", "metric", "layer", "label", "seed", "value"});
  CHECK(t.rows.size() == r.long_rows);
  bool has_mi = false, has_probe = false;
  for (const auto& row : t.rows) {
    has_mi = has_mi || row[1] == "mutual_information";
    has_probe = has_probe || (row[1] == "probe_confidence" && row[2] == "0");
  }
  CHECK(has_mi);
  CHECK(has_probe);

  // a stream missing from a verified run is listed as a gap
  fs::remove(dir / "seed_5" / "mi.csv");
  auto m = RunManifest::load(dir);
  m.artifacts.erase("seed_5/mi.csv");
  write_file(dir / "manifest.json", m.to_json().dump(1) + "\n");
  const auto r2 = emit_report(dir);
  REQUIRE(r2.gaps.size() == 1);
  CHECK(r2.gaps[0] == "seed_5/mi.csv");
  CHECK(r2.summary["gaps"].size() == 1);
  fs::remove_all(dir);

  const auto dir2 = scratch("report_nocurv");
  auto c2 = tiny(dir2);
  c2.seeds = {6};
  c2.diagnostics.curvature = false;
  run_experiment(c2, RunMode::Fresh);
  const auto r3 = emit_report(dir2);
  CHECK(r3.summary["transition"] == "unavailable");
  CHECK(r3.summary["seeds"][0]["transition_step"] == "unavailable");
  CHECK(r3.gaps.empty());
  fs::remove_all(dir2);
}
