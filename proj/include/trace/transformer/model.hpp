#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "trace/absynth/lexicon.hpp"
#include "trace/absynth/types.hpp"
#include "trace/kernel/model.hpp"

namespace trace::transformer {

using kernel::Batch;
using kernel::ModelConfig;
using kernel::ModelState;

/// Word <-> id map. Ids 0 and 1 are PAD and BOS; lexicon entry i gets id 2+i.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(const absynth::Lexicon& lexicon);

  int size() const { return static_cast<int>(words_.size()); }
  std::int32_t id(std::string_view word) const;  // -1 when unknown
  const std::string& word(std::int32_t id) const { return words_.at(static_cast<std::size_t>(id)); }
  absynth::Pos pos(std::int32_t id) const { return pos_.at(static_cast<std::size_t>(id)); }

  std::vector<std::int32_t> encode(const absynth::SentenceRecord& r) const;

 private:
  std::vector<std::string> words_;
  std::vector<absynth::Pos> pos_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// Whitespace tokeniser; pads with PAD on the right to seq_len.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab, int seq_len = 16);

/// small (1, 64, 2, 128), medium (2, 96, 3, 384), large (3, 128, 4, 512).
ModelConfig preset(std::string_view name, int vocab_size);

/// "no_ffn" drops the feed-forward sublayer; "single_head" sets H = 1.
ModelConfig ablate(const ModelConfig& cfg, std::string_view variant);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

/// Checkpoint container:
///   "TRACECKP" | u32 version | u32 header length | JSON header (config, step,
///   seed, epoch, cursor) | u32 block count | blocks
/// Each block: u32 name length | name | u32 ndims | u64 dims[ndims] |
///   u8 dtype (1 = float32) | u64 count | little-endian data.
/// Blocks are the model parameters followed by "adam.m" and "adam.v".
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the parameter bytes.
std::uint64_t parameter_checksum(const ModelState& state);

}  // namespace trace::transformer
