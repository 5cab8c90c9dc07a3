// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "tempsteer/model.hpp"
#include "tempsteer/tensor.hpp"

namespace tempsteer::engine {

// Layers whose block input should be recorded during prefill.
struct TapRequest {
  std::set<int> layers;
};

struct InjectionEntry {
  int layer = 0;
  Tensor ae;  // [mtl x d_model], added to positions [0, mtl) of the block input
};

// Activation additions applied at the front of the prompt (offset 0, the
// <bos> position included). At most one entry per layer, strictly increasing.
class InjectionPlan {
 public:
  InjectionPlan() = default;
  explicit InjectionPlan(std::vector<InjectionEntry> entries);

  // Appends an entry; `layer` must exceed every layer already present.
  void add(int layer, Tensor ae);

  const std::vector<InjectionEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const InjectionEntry* find(int layer) const;
  std::vector<int> layers() const;
  // Longest ae row count across entries.
  std::size_t max_rows() const;

 private:
  std::vector<InjectionEntry> entries_;
};

// Per-call key/value cache; owned by whoever called prefill.
struct KvCache {
  int d_model = 0;
  std::size_t length = 0;  // filled positions
  std::vector<std::vector<float>> keys;    // per layer, [max_seq x d_model]
  std::vector<std::vector<float>> values;  // per layer, [max_seq x d_model]
};

struct PrefillResult {
  Tensor logits;                  // [vocab_size], last position
  std::map<int, Tensor> tapped;   // layer -> [n_tokens x d_model] block input
  KvCache cache;
};

// Runs the prompt through the model. The value fed to block l (and recorded
// when l is tapped) is the residual stream after block l-1, plus the plan's
// ae for l on the first mtl positions.
PrefillResult prefill(const ModelBundle& bundle, const TokenIds& tokens, const TapRequest& taps = {},
                      const InjectionPlan* plan = nullptr);

// Appends one token to the cache and returns the logits at its position.
Tensor decode_step(const ModelBundle& bundle, KvCache& cache, TokenId token);

struct GenerateOptions {
  int max_new = 8;
  // Generation stops after emitting any of these; the stop token itself is not returned.
  std::set<TokenId> stop_ids;
};

// Greedy decoding. The plan is applied during prefill only and reaches later
// steps through the cache.
TokenIds generate(const ModelBundle& bundle, const TokenIds& tokens, const InjectionPlan* plan,
                  const GenerateOptions& options);

// Index of the largest logit; ties resolve to the lowest id.
TokenId argmax(const Tensor& logits);

// <eos> when present in the vocabulary.
std::set<TokenId> default_stop_ids(const ModelBundle& bundle);

}  // namespace tempsteer::engine
