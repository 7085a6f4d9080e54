#include "trace/harness/report.hpp"

#include <cmath>
#include <map>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/harness/config.hpp"
#include "trace/harness/run.hpp"

namespace trace::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct LongSource {
  const char* file;
  const char* layer_col;  // nullptr = blank
  std::vector<const char*> label_cols;
  std::vector<std::pair<const char*, const char*>> values;  // column -> metric name
};

const std::vector<LongSource>& long_sources() {
  static const std::vector<LongSource> s{
      {"loss.csv", nullptr, {}, {{"loss", "train_loss"}, {"token_acc", "train_token_accuracy"}}},
      {"checkpoints.csv", nullptr, {}, {{"val_token_acc", "val_token_accuracy"}}},
      {"curvature.csv", nullptr, {}, {{"trace", "hessian_trace"}, {"eff_rank", "effective_rank"}, {"complexity", "curvature_complexity"}}},
      {"curvature_hutchinson.csv", nullptr, {}, {{"trace_estimate", "hutchinson_trace"}}},
      {"id.csv", "layer", {}, {{"id", "intrinsic_dimension"}}},
      {"id_avg.csv", nullptr, {}, {{"avg_id", "average_id"}}},
      {"mi.csv", nullptr, {"pair"}, {{"estimate_nats", "mutual_information"}}},
      {"probe_conf.csv", "layer", {"family", "label"}, {{"confidence", "probe_confidence"}}},
      {"output_acc.csv", nullptr, {"family", "label"}, {{"accuracy", "output_category_accuracy"}}},
  };
  return s;
}

ordered_json mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return nullptr;
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return {{"mean", m}, {"std", xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0}, {"n", xs.size()}};
}

}  // namespace

Report emit_report(const fs::path& run_dir) {
  const auto m = RunManifest::load(run_dir);
  const auto bad = verify_manifest(m, run_dir);
  if (!bad.empty()) {
    std::string msg = "run manifest does not verify:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw DataError(msg);
  }
  const auto cfg = from_json(m.config);
  const auto& d = cfg.diagnostics;

  std::vector<std::string> expected{"loss.csv", "checkpoints.csv", "eval.json"};
  if (d.curvature) expected.push_back("curvature.csv");
  if (d.curvature && d.hutchinson_probes > 0) expected.push_back("curvature_hutchinson.csv");
  if (d.id) expected.insert(expected.end(), {"id.csv", "id_avg.csv"});
  if (d.mi) expected.push_back("mi.csv");
  if (d.probes) expected.insert(expected.end(), {"probe_conf.csv", "probe_report.csv", "output_acc.csv"});

  Report rep;
  fs::create_directories(run_dir / "report");
  std::string text = "step,metric,layer,label,seed,value\n";
  ordered_json seeds = ordered_json::array();
  std::map<std::string, std::vector<double>> finals;
  std::vector<double> fired;
  std::map<std::string, std::vector<double>> probe_f1, probe_acc;
  std::vector<std::string> probe_order;

  for (const auto& o : m.seeds) {
    const auto sd = run_dir / seed_dir_name(o.seed);
    const auto seed = std::to_string(o.seed);
    for (const auto& e : expected)
      if (!fs::exists(sd / e)) rep.gaps.push_back(seed_dir_name(o.seed) + "/" + e);

    for (const auto& src : long_sources()) {
      if (!fs::exists(sd / src.file)) continue;
      const auto t = read_csv(sd / src.file);
      const int is = t.column("step");
      const int il = src.layer_col ? t.column(src.layer_col) : -1;
      std::vector<int> lc;
      for (const char* c : src.label_cols) lc.push_back(t.column(c));
      for (const auto& r : t.rows) {
        std::string label;
        for (std::size_t i = 0; i < lc.size(); ++i) label += (i ? ":" : "") + r[static_cast<std::size_t>(lc[i])];
        const std::string layer = il >= 0 ? r[static_cast<std::size_t>(il)] : "";
        for (const auto& [col, metric] : src.values) {
          text += r[static_cast<std::size_t>(is)] + "," + metric + "," + layer + "," + label + "," + seed + "," +
                  r[static_cast<std::size_t>(t.column(col))] + "\n";
          ++rep.long_rows;
        }
      }
    }

    ordered_json s;
    s["seed"] = o.seed;
    s["status"] = o.status;
    s["stop_reason"] = o.stop_reason;
    s["final_step"] = o.final_step;
    if (fs::exists(sd / "eval.json")) {
      const auto ev = json::parse(read_file(sd / "eval.json"));
      for (const char* k : {"token_accuracy", "perplexity", "exact_match", "bleu"}) {
        s[k] = ev.at(k);
        finals[k].push_back(ev.at(k).get<double>());
      }
    }
    if (!d.curvature) {
      s["transition_step"] = "unavailable";
    } else if (fs::exists(sd / "transition.json")) {
      const auto tr = json::parse(read_file(sd / "transition.json"));
      if (tr.contains("available") && !tr.at("available").get<bool>())
        s["transition_step"] = "unavailable";
      else
        s["transition_step"] = tr.at("step");
      if (tr.at("step").is_number()) fired.push_back(tr.at("step").get<double>());
    } else {
      s["transition_step"] = "unavailable";
    }
    if (fs::exists(sd / "probe_report.csv")) {
      const auto t = read_csv(sd / "probe_report.csv");
      for (const auto& r : t.rows) {
        const auto key = r[0] + "," + r[1] + "," + r[2];
        if (!probe_f1.count(key)) probe_order.push_back(key);
        probe_f1[key].push_back(std::stod(r[static_cast<std::size_t>(t.column("f1"))]));
        probe_acc[key].push_back(std::stod(r[static_cast<std::size_t>(t.column("acc"))]));
      }
    }
    seeds.push_back(s);
  }
  write_file(run_dir / "report" / "long.csv", text);

  ordered_json sum;
  sum["config_hash"] = m.config_hash;
  sum["status"] = m.status;
  sum["preset"] = cfg.preset;
  sum["ablation"] = cfg.ablation;
  sum["seeds"] = seeds;
  ordered_json means;
  for (const char* k : {"token_accuracy", "perplexity", "exact_match", "bleu"}) means[k] = mean_std(finals[k]);
  sum["final_metrics"] = means;
  if (!d.curvature) {
    sum["transition"] = "unavailable";
  } else {
    ordered_json tr;
    tr["fired"] = fired.size();
    tr["of"] = m.seeds.size();
    tr["steps"] = fired;
    const auto ms = mean_std(fired);
    tr["step"] = ms;
    tr["coefficient_of_variation"] =
        fired.size() > 1 && ms["mean"].get<double>() > 0 ? json(ms["std"].get<double>() / ms["mean"].get<double>()) : json(nullptr);
    sum["transition"] = tr;
  }
  ordered_json probes = ordered_json::array();
  for (const auto& key : probe_order) {
    const auto parts = split(key, ',');
    probes.push_back({{"layer", std::stoi(parts[0])},
                      {"family", parts[1]},
                      {"label", parts[2]},
                      {"f1", mean_std(probe_f1[key])["mean"]},
                      {"acc", mean_std(probe_acc[key])["mean"]}});
  }
  sum["probe_table"] = probes;
  sum["gaps"] = rep.gaps;
  write_file(run_dir / "report" / "summary.json", sum.dump(1) + "\n");
  rep.summary = sum;
  return rep;
}

}  // namespace trace::harness
