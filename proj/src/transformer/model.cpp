#include "trace/transformer/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trace/common/error.hpp"
#include "trace/common/io.hpp"

namespace trace::transformer {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

Vocab::Vocab(const absynth::Lexicon& lexicon) {
  words_ = {"<pad>", "<bos>"};
  pos_ = {absynth::Pos::Noun, absynth::Pos::Noun};
  for (const auto& e : lexicon.entries()) {
    words_.push_back(e.token_name);
    pos_.push_back(e.pos);
  }
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<std::int32_t>(i));
}

std::int32_t Vocab::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  return it == ids_.end() ? -1 : it->second;
}

std::vector<std::int32_t> Vocab::encode(const absynth::SentenceRecord& r) const {
  std::vector<std::int32_t> out;
  out.reserve(r.tokens.size());
  for (const auto& t : r.tokens) {
    const auto i = id(t);
    if (i < kernel::kFirstWordId) throw TokenizationError("unknown word '" + t + "'");
    out.push_back(i);
  }
  return out;
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab, int seq_len) {
  std::vector<std::int32_t> ids;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    const auto i = vocab.id(w);
    if (i < kernel::kFirstWordId) throw TokenizationError("unknown word '" + w + "'");
    ids.push_back(i);
  }
  if (static_cast<int>(ids.size()) > seq_len)
    throw TokenizationError("text has " + std::to_string(ids.size()) + " words, more than seq_len " +
                            std::to_string(seq_len));
  ids.resize(static_cast<std::size_t>(seq_len), kernel::kPad);
  return ids;
}

ModelConfig preset(std::string_view name, int vocab_size) {
  ModelConfig c;
  c.preset = std::string(name);
  c.vocab_size = vocab_size;
  if (name == "small") {
    c.n_layers = 1, c.d_model = 64, c.n_heads = 2, c.d_ffn = 128;
  } else if (name == "medium") {
    c.n_layers = 2, c.d_model = 96, c.n_heads = 3, c.d_ffn = 384;
  } else if (name == "large") {
    c.n_layers = 3, c.d_model = 128, c.n_heads = 4, c.d_ffn = 512;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

ModelConfig ablate(const ModelConfig& cfg, std::string_view variant) {
  ModelConfig c = cfg;
  if (variant == "no_ffn") {
    c.use_ffn = false;
  } else if (variant == "single_head") {
    c.n_heads = 1;
  } else if (variant == "base" || variant.empty()) {
    return c;
  } else {
    throw ConfigError("unknown ablation '" + std::string(variant) + "'");
  }
  c.variant = c.variant == "base" ? std::string(variant) : c.variant + "+" + std::string(variant);
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::ordered_json{{"preset", c.preset},   {"n_layers", c.n_layers},     {"d_model", c.d_model},
                                {"n_heads", c.n_heads}, {"d_ffn", c.d_ffn},           {"seq_len", c.seq_len},
                                {"vocab_size", c.vocab_size}, {"dropout", c.dropout}, {"use_ffn", c.use_ffn},
                                {"pre_norm", c.pre_norm},     {"variant", c.variant}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.preset = j.value("preset", c.preset);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.dropout = j.value("dropout", c.dropout);
    c.use_ffn = j.value("use_ffn", c.use_ffn);
    c.pre_norm = j.value("pre_norm", c.pre_norm);
    c.variant = j.value("variant", c.variant);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_block(std::string& out, const std::string& name, const std::vector<std::size_t>& shape, const float* data,
               std::size_t count) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto s : shape) put<std::uint64_t>(out, s);
  put<std::uint8_t>(out, 1);
  put<std::uint64_t>(out, count);
  out.append(reinterpret_cast<const char*>(data), count * sizeof(float));
}

class Reader {
 public:
  explicit Reader(std::string data) : d_(std::move(data)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, d_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* out, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(out, d_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) throw IoError("truncated checkpoint");
  }
  std::string d_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelState& s, const fs::path& path) {
  const kernel::ParamLayout layout(s.config);
  if (s.params.size() != layout.total()) throw DataError("state parameters do not match its config");
  nlohmann::ordered_json header{{"config", config_to_json(s.config)}, {"step", s.step},     {"seed", s.seed},
                                {"epoch", s.epoch},                   {"cursor", s.cursor}};
  const std::string h = header.dump();
  std::string out = "TRACECKP";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layout.blocks().size() + 2));
  for (const auto& b : layout.blocks()) put_block(out, b.name, b.shape, s.params.data() + b.offset, b.size());
  put_block(out, "adam.m", {s.adam_m.size()}, s.adam_m.data(), s.adam_m.size());
  put_block(out, "adam.v", {s.adam_v.size()}, s.adam_v.data(), s.adam_v.size());
  // write then rename, so a crash never leaves a half-written checkpoint behind
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp, out);
  fs::rename(tmp, path);
}

ModelState load_checkpoint(const fs::path& path) {
  Reader r(read_file(path));
  if (r.bytes(8) != "TRACECKP") throw IoError("not a checkpoint: " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = r.get<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  ModelState s;
  s.config = config_from_json(header.at("config"));
  s.step = header.at("step").get<std::int64_t>();
  s.seed = header.at("seed").get<std::uint64_t>();
  s.epoch = header.at("epoch").get<std::int64_t>();
  s.cursor = header.at("cursor").get<std::int64_t>();
  const kernel::ParamLayout layout(s.config);
  s.params.assign(layout.total(), 0.0f);
  s.adam_m.assign(layout.total(), 0.0f);
  s.adam_v.assign(layout.total(), 0.0f);
  const auto nblocks = r.get<std::uint32_t>();
  std::size_t seen = 0;
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    const auto nd = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(nd);
    for (auto& x : shape) x = r.get<std::uint64_t>();
    if (r.get<std::uint8_t>() != 1) throw IoError("unsupported dtype in block " + name);
    const auto count = r.get<std::uint64_t>();
    float* dst = nullptr;
    std::size_t expect = 0;
    if (name == "adam.m" || name == "adam.v") {
      dst = name == "adam.m" ? s.adam_m.data() : s.adam_v.data();
      expect = layout.total();
    } else {
      const auto& b = layout.at(name);
      if (shape != b.shape) throw IoError("shape mismatch in block " + name);
      dst = s.params.data() + b.offset;
      expect = b.size();
      ++seen;
    }
    if (count != expect) throw IoError("size mismatch in block " + name);
    r.floats(dst, count);
  }
  if (seen != layout.blocks().size()) throw IoError("checkpoint is missing parameter blocks");
  if (!r.done()) throw IoError("trailing bytes in checkpoint");
  return s;
}

std::uint64_t parameter_checksum(const ModelState& s) {
  return fnv1a_bytes(s.params.data(), s.params.size() * sizeof(float));
}

}  // namespace trace::transformer
