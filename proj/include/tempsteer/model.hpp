// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempsteer/container.hpp"
#include "tempsteer/tensor.hpp"

namespace tempsteer::engine {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

enum class PosScheme { absolute_learned, rotary };
enum class NormKind { rmsnorm, layernorm };

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 2;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq = 128;
  PosScheme pos_scheme = PosScheme::absolute_learned;
  NormKind norm = NormKind::rmsnorm;
  float norm_eps = 1e-5f;
  float rope_theta = 10000.0f;

  int head_dim() const { return d_model / n_heads; }
  // Throws Error(config) on the first violated invariant.
  void validate() const;
};

std::string_view to_string(PosScheme p);
std::string_view to_string(NormKind n);

ModelConfig parse_config(std::string_view json_text);
std::string dump_config(const ModelConfig& config);

// Token string <-> id table. Ids are dense in [0, size()).
class Vocab {
 public:
  static constexpr TokenId pad_id = 0;
  static constexpr TokenId bos_id = 1;
  static constexpr TokenId unk_id = 2;
  static constexpr std::string_view pad_token = "<pad>";
  static constexpr std::string_view bos_token = "<bos>";
  static constexpr std::string_view unk_token = "<unk>";
  static constexpr std::string_view eos_token = "<eos>";

  Vocab() = default;
  // Validates reserved ids and density against vocab_size.
  Vocab(const std::map<std::string, TokenId>& table, int vocab_size);

  // Reserved tokens, then <eos>, then `words` in first-seen order, skipping duplicates.
  static Vocab from_words(const std::vector<std::string>& words);
  static Vocab parse(std::string_view json_text, int vocab_size);
  std::string dump() const;

  int size() const { return static_cast<int>(tokens_.size()); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::optional<TokenId> eos_id() const { return find(eos_token); }

  // Whitespace tokenization; unknown words map to <unk>. Never adds <bos>.
  TokenIds encode(std::string_view text) const;
  // Joins tokens with single spaces, dropping <pad> and <bos>. Out-of-range ids render as <unk>.
  std::string decode(const TokenIds& ids) const;

 private:
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> tokens_;
};

// Per-block weight views resolved once at load.
struct BlockWeights {
  const Tensor* attn_norm_w = nullptr;
  const Tensor* attn_norm_b = nullptr;  // layernorm only
  const Tensor* wq = nullptr;
  const Tensor* wk = nullptr;
  const Tensor* wv = nullptr;
  const Tensor* wo = nullptr;
  const Tensor* mlp_norm_w = nullptr;
  const Tensor* mlp_norm_b = nullptr;
  const Tensor* w1 = nullptr;
  const Tensor* w2 = nullptr;
};

// Name -> shape for every tensor the config requires. Linear weights are [out, in].
std::map<std::string, std::vector<std::size_t>> expected_weight_shapes(const ModelConfig& config);

// Immutable after construction; share by const reference across threads.
class ModelBundle {
 public:
  ModelBundle(ModelConfig config, container::TensorMap weights, Vocab vocab);
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
  ModelBundle(ModelBundle&&) noexcept = default;
  ModelBundle& operator=(ModelBundle&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const container::TensorMap& weights() const { return weights_; }
  const Tensor& weight(const std::string& name) const;

  const Tensor& tok_emb() const { return *tok_emb_; }
  const Tensor* pos_emb() const { return pos_emb_; }
  const Tensor& final_norm_w() const { return *final_norm_w_; }
  const Tensor* final_norm_b() const { return final_norm_b_; }
  const Tensor& lm_head() const { return *lm_head_; }
  const BlockWeights& block(int layer) const { return blocks_.at(static_cast<std::size_t>(layer)); }

 private:
  void bind();

  ModelConfig config_;
  container::TensorMap weights_;
  Vocab vocab_;
  const Tensor* tok_emb_ = nullptr;
  const Tensor* pos_emb_ = nullptr;
  const Tensor* final_norm_w_ = nullptr;
  const Tensor* final_norm_b_ = nullptr;
  const Tensor* lm_head_ = nullptr;
  std::vector<BlockWeights> blocks_;
};

struct ModelPaths {
  std::filesystem::path weights;
  std::filesystem::path config;
  std::filesystem::path vocab;
};

// A directory resolves to <dir>/model.safetensors; sidecars config.json and
// vocab.json live next to the container file.
ModelPaths resolve_model_paths(const std::filesystem::path& container_path);

ModelBundle load_model(const std::filesystem::path& container_path);
// Writes model.safetensors, config.json and vocab.json into `dir`.
void save_model(const ModelBundle& bundle, const std::filesystem::path& dir);

// Seeded random weights for tests and smoke runs; config.vocab_size is taken from `vocab`.
ModelBundle random_bundle(ModelConfig config, Vocab vocab, std::uint64_t seed);

TokenIds encode(const ModelBundle& bundle, std::string_view text);
std::string decode(const ModelBundle& bundle, const TokenIds& ids);
// <bos> followed by encode(text): the form every forward pass consumes.
TokenIds encode_with_bos(const ModelBundle& bundle, std::string_view text);

}  // namespace tempsteer::engine
