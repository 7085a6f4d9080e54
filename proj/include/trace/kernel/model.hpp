#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace trace::kernel {

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kFirstWordId = 2;

struct ModelConfig {
  std::string preset = "small";
  int n_layers = 1;
  int d_model = 64;
  int n_heads = 2;
  int d_ffn = 128;
  int seq_len = 16;
  int vocab_size = 0;  // including PAD and BOS
  double dropout = 0.1;
  bool use_ffn = true;
  bool pre_norm = true;
  std::string variant = "base";

  int d_head() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  std::size_t size() const;
};

/// Stable name -> (offset, shape) map over the flat parameter vector.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const ModelConfig& cfg);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  const ParamBlock& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  template <class T>
  std::map<std::string, std::vector<T>> unflatten(std::span<const T> flat) const {
    std::map<std::string, std::vector<T>> out;
    for (const auto& b : blocks_)
      out[b.name] = std::vector<T>(flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                   flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
    return out;
  }
  template <class T>
  std::vector<T> flatten(const std::map<std::string, std::vector<T>>& parts) const;

 private:
  void add(const std::string& name, std::vector<std::size_t> shape);
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

/// Teacher-forced batch. inputs[b*T+t] is the token fed at position t;
/// targets[b*T+t] is the id to predict there, or -1.
struct Batch {
  int B = 0;
  int T = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  int n_targets() const;
};

/// Next-token batch: input [BOS, w1..w_{n-1}], targets [w1..wn]; T = longest sequence.
Batch make_batch(const std::vector<std::vector<std::int32_t>>& seqs, int seq_len);

/// Analysis batch: input [BOS, w1..wn] (truncated to seq_len) so every word
/// appears as an input; targets are the usual next tokens where defined.
Batch make_feature_batch(const std::vector<std::vector<std::int32_t>>& seqs, int seq_len);

struct ModelState {
  ModelConfig config;
  std::vector<float> params;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::int64_t cursor = 0;  // next batch index within the epoch
};

/// N(0, 0.02) weights, zero biases, unit layer-norm gains, zero moments.
ModelState init_state(const ModelConfig& cfg, std::uint64_t seed);

std::size_t parameter_count(const ModelConfig& cfg);

}  // namespace trace::kernel
