#include "trace/absynth/corpus_io.hpp"

#include <sstream>

#include "trace/absynth/frames.hpp"
#include "trace/common/error.hpp"
#include "trace/common/io.hpp"

namespace trace::absynth {

using ojson = nlohmann::ordered_json;

std::string record_to_json(const SentenceRecord& r) {
  ojson j;
  j["tokens"] = r.tokens;
  auto names = [](const auto& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (auto x : v) out.emplace_back(to_string(x));
    return out;
  };
  j["pos"] = names(r.pos_tags);
  j["roles"] = names(r.semantic_roles);
  j["tiers"] = names(r.entropy_tiers);
  j["complexity"] = std::string(to_string(r.complexity));
  j["frame"] = r.frame_name;
  return j.dump();
}

SentenceRecord record_from_json(std::string_view line) {
  SentenceRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& s : j.at("pos")) r.pos_tags.push_back(parse_pos(s.get<std::string>()));
    for (const auto& s : j.at("roles")) r.semantic_roles.push_back(parse_role(s.get<std::string>()));
    for (const auto& s : j.at("tiers")) r.entropy_tiers.push_back(parse_tier(s.get<std::string>()));
    r.complexity = parse_complexity(j.at("complexity").get<std::string>());
    r.frame_name = j.at("frame").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad corpus record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("bad corpus record: ") + e.what());
  }
  const auto n = r.tokens.size();
  if (r.pos_tags.size() != n || r.semantic_roles.size() != n || r.entropy_tiers.size() != n)
    throw DataError("corpus record annotation lists differ in length");
  return r;
}

void check_record(const SentenceRecord& r, const Lexicon& lexicon) {
  const auto n = r.tokens.size();
  if (r.pos_tags.size() != n || r.semantic_roles.size() != n || r.entropy_tiers.size() != n)
    throw DataError("record annotation lists differ in length");
  if (n > static_cast<std::size_t>(kMaxSentenceLength)) throw DataError("record longer than 16 tokens");
  for (std::size_t i = 0; i < n; ++i) {
    const int idx = lexicon.find(r.tokens[i]);
    if (idx < 0) throw DataError("token " + r.tokens[i] + " not in lexicon");
    if (lexicon[static_cast<std::size_t>(idx)].pos != r.pos_tags[i])
      throw DataError("token " + r.tokens[i] + " annotated with the wrong POS");
  }
}

ojson config_to_json(const CorpusConfig& cfg) {
  ojson j;
  j["n_sentences"] = cfg.n_sentences;
  j["complexity_mix"] = cfg.complexity_mix;
  j["split_fractions"] = cfg.split_fractions;
  j["tier_targets"] = cfg.tier_targets;
  j["seed"] = cfg.seed;
  j["zipf"] = {{"alpha", cfg.zipf.alpha}, {"noise_sigma", cfg.zipf.noise_sigma},
               {"vocab_size", cfg.zipf.vocab_size}};
  j["clusters"] = {{"n_clusters", cfg.clusters.n_clusters},
                   {"intra_base_range", cfg.clusters.intra_base_range},
                   {"cross_base_range", cfg.clusters.cross_base_range}};
  ojson counts;
  for (const auto& [p, n] : cfg.category_counts) counts[std::string(to_string(p))] = n;
  j["category_counts"] = counts;
  if (!cfg.frames_json.empty()) j["frames"] = nlohmann::json::parse(cfg.frames_json);
  return j;
}

CorpusConfig config_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "n_sentences") c.n_sentences = v.get<int>();
      else if (k == "complexity_mix") c.complexity_mix = v.get<std::array<double, 3>>();
      else if (k == "split_fractions") c.split_fractions = v.get<std::array<double, 3>>();
      else if (k == "tier_targets") c.tier_targets = v.get<std::array<double, 3>>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "zipf") {
        c.zipf.alpha = v.value("alpha", c.zipf.alpha);
        c.zipf.noise_sigma = v.value("noise_sigma", c.zipf.noise_sigma);
        c.zipf.vocab_size = v.value("vocab_size", c.zipf.vocab_size);
      } else if (k == "clusters") {
        c.clusters.n_clusters = v.value("n_clusters", c.clusters.n_clusters);
        c.clusters.intra_base_range = v.value("intra_base_range", c.clusters.intra_base_range);
        c.clusters.cross_base_range = v.value("cross_base_range", c.clusters.cross_base_range);
      } else if (k == "category_counts") {
        c.category_counts.clear();
        for (const auto& [pk, pv] : v.items()) c.category_counts[parse_pos(pk)] = pv.get<int>();
      } else if (k == "frames") {
        c.frames_json = v.dump();
      } else {
        throw ConfigError("unknown corpus config key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad corpus config: ") + e.what());
  }
  return c;
}

ojson stats_to_json(const StatsReport& s) {
  ojson j;
  j["n_sentences"] = s.n_sentences;
  j["n_tokens"] = s.n_tokens;
  j["complexity_mix"] = {{"simple", s.complexity_mix[0]}, {"medium", s.complexity_mix[1]},
                         {"complex", s.complexity_mix[2]}};
  j["tier_profile"] = {{"low", s.tier_profile[0]}, {"medium", s.tier_profile[1]}, {"high", s.tier_profile[2]}};
  j["zipf_fit_exponent"] = s.zipf_fit_exponent;
  j["lexicon_size"] = s.lexicon_size;
  ojson lc, tc;
  for (const auto& [p, n] : s.lexicon_category_counts) lc[std::string(to_string(p))] = n;
  for (const auto& [p, n] : s.category_token_counts) tc[std::string(to_string(p))] = n;
  j["lexicon_category_counts"] = lc;
  j["category_token_counts"] = tc;
  return j;
}

namespace {

std::string records_jsonl(const std::vector<SentenceRecord>& rs) {
  std::string out;
  for (const auto& r : rs) {
    out += record_to_json(r);
    out += '\n';
  }
  return out;
}

std::vector<SentenceRecord> read_records(const fs::path& p, const Lexicon& lex) {
  std::vector<SentenceRecord> out;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(line));
    check_record(out.back(), lex);
  }
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "train.jsonl", records_jsonl(corpus.train));
  write_file(dir / "val.jsonl", records_jsonl(corpus.val));
  write_file(dir / "test.jsonl", records_jsonl(corpus.test));
  write_file(dir / "lexicon.jsonl", corpus.lexicon.to_jsonl());
  write_file(dir / "frames.json", frames_to_json(corpus.frames) + "\n");
  write_file(dir / "meta.json", config_to_json(corpus.config).dump(2) + "\n");
  write_file(dir / "stats.json", stats_to_json(corpus_stats(corpus)).dump(2) + "\n");
}

Corpus load_corpus(const fs::path& dir) {
  if (!fs::exists(dir / "meta.json")) throw IoError("not a corpus directory: " + dir.string());
  Corpus c;
  c.config = config_from_json(nlohmann::json::parse(read_file(dir / "meta.json")));
  c.lexicon = Lexicon::from_jsonl(read_file(dir / "lexicon.jsonl"), c.config.clusters, c.config.seed);
  c.frames = parse_frames(read_file(dir / "frames.json"));
  c.train = read_records(dir / "train.jsonl", c.lexicon);
  c.val = read_records(dir / "val.jsonl", c.lexicon);
  c.test = read_records(dir / "test.jsonl", c.lexicon);
  return c;
}

}  // namespace trace::absynth
