#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "trace/absynth/corpus_io.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"
#include "trace/harness/config.hpp"
#include "trace/harness/report.hpp"
#include "trace/harness/run.hpp"
#include "trace/kernel/blas.hpp"
#include "trace/mi/layers.hpp"
#include "trace/probing/probe.hpp"
#include "trace/transformer/model.hpp"

using namespace trace;

namespace {

struct Common {
  std::string config, out;
  std::uint64_t seed = 0;
  bool has_seed = false, force = false, resume = false;
};

harness::ExperimentConfig load(const Common& c) {
  harness::ExperimentConfig cfg = c.config.empty() ? harness::ExperimentConfig{} : harness::load_config(c.config);
  if (!c.out.empty()) cfg.out = c.out;
  if (c.has_seed) cfg.seeds = {c.seed};
  cfg.validate();
  return cfg;
}

harness::RunMode mode(const Common& c) {
  if (c.force && c.resume) throw ConfigError("--force and --resume are exclusive");
  return c.force ? harness::RunMode::Force : c.resume ? harness::RunMode::Resume : harness::RunMode::Fresh;
}

int finish(const harness::RunManifest& m, const std::string& out) {
  for (const auto& s : m.seeds)
    std::printf("seed %llu: %s%s%s (step %lld)\n", static_cast<unsigned long long>(s.seed), s.status.c_str(),
                s.stop_reason.empty() ? "" : ", ", s.stop_reason.c_str(), static_cast<long long>(s.final_step));
  for (const auto& s : m.seeds)
    if (!s.error.empty()) std::fprintf(stderr, "seed %llu failed: %s\n", static_cast<unsigned long long>(s.seed), s.error.c_str());
  std::printf("%s run %s in %s\n", m.status.c_str(), m.config_hash.c_str(), out.c_str());
  return m.status == "complete" ? 0 : 3;
}

void add_common(CLI::App* app, Common& c, bool seed) {
  app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  if (seed) app->add_option("--seed", c.seed, "run a single seed")->each([&](const std::string&) { c.has_seed = true; });
  app->add_flag("--force", c.force, "overwrite an existing run");
}

std::vector<absynth::SentenceRecord> probe_records(const absynth::Corpus& corpus, int limit) {
  auto r = corpus.val;
  if (limit > 0 && r.size() > static_cast<std::size_t>(limit)) r.resize(static_cast<std::size_t>(limit));
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("TRACE_THREADS")) {
    const int n = std::atoi(t);
    if (n < 1) {
      std::fprintf(stderr, "error: TRACE_THREADS must be a positive integer\n");
      return 2;
    }
    kernel::set_blas_threads(n);
  } else {
    kernel::set_blas_threads(1);
  }

  CLI::App app{"Training dynamics instrumentation for small transformers on synthetic corpora"};
  app.require_subcommand(1);

  Common gen_c, train_c, diag_c, rep_c;
  auto* gen = app.add_subcommand("generate", "generate the synthetic corpus");
  add_common(gen, gen_c, true);

  auto* train = app.add_subcommand("train", "train models without diagnostics");
  add_common(train, train_c, true);
  train->add_flag("--resume", train_c.resume, "continue an interrupted run");

  auto* diag = app.add_subcommand("diagnose", "train with diagnostics at every checkpoint");
  diag->alias("run");
  add_common(diag, diag_c, true);
  diag->add_flag("--resume", diag_c.resume, "continue an interrupted run");

  std::string ckpt, corpus_dir, family = "pos", probe_out;
  std::uint64_t probe_seed = 1;
  int probe_limit = 0;
  auto* probe = app.add_subcommand("probe", "train probes on one checkpoint");
  probe->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  probe->add_option("--corpus", corpus_dir, "corpus directory")->required()->check(CLI::ExistingDirectory);
  probe->add_option("--family", family, "pos or srl")->check(CLI::IsMember({"pos", "srl"}));
  probe->add_option("--seed", probe_seed, "probe seed");
  probe->add_option("--sentences", probe_limit, "validation sentences to use (0 = all)");
  probe->add_option("--out", probe_out, "directory for probe_report.csv");

  std::string mi_ckpt, mi_corpus, mi_out;
  std::uint64_t mi_seed = 1;
  int mi_sentences = 512, mi_steps = 200;
  auto* mic = app.add_subcommand("mi", "MINE estimates between layers of one checkpoint");
  mic->add_option("--checkpoint", mi_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  mic->add_option("--corpus", mi_corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  mic->add_option("--seed", mi_seed, "critic seed");
  mic->add_option("--sentences", mi_sentences, "validation sentences");
  mic->add_option("--steps", mi_steps, "critic training steps");
  mic->add_option("--out", mi_out, "directory for mi.csv");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "long table and summary of a finished run");
  rep->add_option("--out", report_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto cfg = load(gen_c);
      if (gen_c.has_seed) cfg.corpus.seed = gen_c.seed;
      const fs::path dir = gen_c.out.empty() ? fs::path(cfg.out) / "corpus" : fs::path(gen_c.out);
      if (fs::exists(dir / "meta.json") && !gen_c.force)
        throw ConfigError(dir.string() + " already holds a corpus; pass --force to overwrite");
      const auto corpus = absynth::generate_corpus(cfg.corpus);
      absynth::write_corpus(corpus, dir);
      std::printf("%zu train, %zu val, %zu test sentences, %zu words -> %s\n", corpus.train.size(), corpus.val.size(),
                  corpus.test.size(), corpus.lexicon.entries().size(), dir.string().c_str());
      return 0;
    }
    if (train->parsed()) {
      auto cfg = load(train_c);
      cfg.diagnostics.curvature = cfg.diagnostics.id = cfg.diagnostics.probes = cfg.diagnostics.mi = false;
      return finish(harness::run_experiment(cfg, mode(train_c)), cfg.out);
    }
    if (diag->parsed()) {
      const auto cfg = load(diag_c);
      return finish(harness::run_experiment(cfg, mode(diag_c)), cfg.out);
    }
    if (probe->parsed()) {
      const auto state = transformer::load_checkpoint(ckpt);
      const auto corpus = absynth::load_corpus(corpus_dir);
      const transformer::Vocab vocab(corpus.lexicon);
      if (vocab.size() != state.config.vocab_size) throw DataError("checkpoint vocabulary does not match the corpus");
      const auto fam = probing::parse_family(family);
      const auto sets = probing::collect_states(state, vocab, probe_records(corpus, probe_limit));
      const auto split = probing::split_rows(sets.front().size(), 0.8, probe_seed);
      std::vector<probing::ProbeReport> reports;
      for (std::size_t l = 0; l < sets.size(); ++l) {
        const auto& s = sets[l];
        auto p = probing::train_probe(probing::gather(s, split.train), s.d, probing::targets(s, fam, split.train),
                                      probing::n_labels(fam), probing::ProbeConfig{}, mix_seed(probe_seed, l));
        const int n = static_cast<int>(split.test.size());
        const auto out = p.predict(probing::gather(s, split.test), n);
        reports.push_back(probing::probe_report(out, probing::targets(s, fam, split.test), n, fam, static_cast<int>(l)));
      }
      std::printf("layer  label                 count    acc   prec    rec     f1\n");
      for (const auto& r : reports)
        for (const auto& m : r.labels)
          std::printf("%5d  %-20s %6lld  %5.3f  %5.3f  %5.3f  %5.3f\n", r.layer, m.label.c_str(),
                      static_cast<long long>(m.count), m.accuracy, m.precision, m.recall, m.f1);
      if (!probe_out.empty()) {
        fs::create_directories(probe_out);
        probing::write_report_csv(fs::path(probe_out) / "probe_report.csv", reports);
      }
      return 0;
    }
    if (mic->parsed()) {
      const auto state = transformer::load_checkpoint(mi_ckpt);
      const auto corpus = absynth::load_corpus(mi_corpus);
      const transformer::Vocab vocab(corpus.lexicon);
      if (vocab.size() != state.config.vocab_size) throw DataError("checkpoint vocabulary does not match the corpus");
      std::vector<std::vector<std::int32_t>> seqs;
      for (const auto& r : probe_records(corpus, mi_sentences)) seqs.push_back(vocab.encode(r));
      mi::MineConfig cfg;
      cfg.steps = mi_steps;
      const auto est = mi::layer_mi(state, seqs, cfg, mi_seed);
      for (const auto& e : est) std::printf("%-10s %8.4f nats%s\n", e.pair.c_str(), e.value, e.clipped ? "  (clipped, unbounded)" : "");
      if (!mi_out.empty()) {
        fs::create_directories(mi_out);
        mi::append_csv(mi_out, est, mi_seed);
      }
      return 0;
    }
    if (rep->parsed()) {
      const auto r = harness::emit_report(report_dir);
      const auto& s = r.summary;
      std::printf("run %s (%s, %s): %s\n", s["config_hash"].get<std::string>().c_str(), s["preset"].get<std::string>().c_str(),
                  s["ablation"].get<std::string>().c_str(), s["status"].get<std::string>().c_str());
      for (const auto& sd : s["seeds"]) std::cout << "  seed " << sd["seed"] << ": " << sd.dump() << "\n";
      std::cout << "final metrics: " << s["final_metrics"].dump() << "\n";
      std::cout << "transition: " << s["transition"].dump() << "\n";
      for (const auto& g : r.gaps) std::printf("gap: %s\n", g.c_str());
      std::printf("%zu long-table rows -> %s/report\n", r.long_rows, report_dir.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
