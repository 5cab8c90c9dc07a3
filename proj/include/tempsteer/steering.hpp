// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tempsteer/engine.hpp"
#include "tempsteer/model.hpp"

namespace tempsteer::steering {

struct WeightedPrompt {
  std::string text;
  float coefficient = 1.0f;

  friend bool operator==(const WeightedPrompt&, const WeightedPrompt&) = default;
};

enum class PromptStyle { year_only, context_phrase, contrasting_pair };

std::string_view to_string(PromptStyle style);
PromptStyle parse_style(std::string_view name);
inline constexpr PromptStyle kAllStyles[] = {PromptStyle::year_only, PromptStyle::context_phrase,
                                             PromptStyle::contrasting_pair};

struct SteeringSpec {
  std::vector<WeightedPrompt> prompts;
  PromptStyle style = PromptStyle::year_only;
  int year = 0;

  // Non-empty finite non-zero weights; contrasting_pair needs exactly one
  // positive and one negative prompt, the other styles exactly one prompt.
  void validate() const;
  friend bool operator==(const SteeringSpec&, const SteeringSpec&) = default;
};

// Which layers receive the steering vector. Multi ranges start at layer 4 unless told otherwise.
struct LayerMode {
  enum class Kind { single, multi };
  static constexpr int kDefaultMultiStart = 4;

  Kind kind = Kind::single;
  int lo = 0;
  int hi = 0;

  static LayerMode single(int layer) { return {Kind::single, layer, layer}; }
  static LayerMode multi(int hi, int lo = kDefaultMultiStart) { return {Kind::multi, lo, hi}; }

  std::vector<int> layers() const;
  // "L6" for single, "L4-10" for multi.
  std::string label() const;
  void validate(int n_layers) const;

  friend bool operator==(const LayerMode&, const LayerMode&) = default;
};

// Open reading of how a multi-layer range is applied: all layers in one
// steered pass, or one pass per layer.
enum class MultiReading { simultaneous, independent };

inline constexpr int kMinYear = 1000;
inline constexpr int kMaxYear = 9999;
inline constexpr std::string_view kContrastWord = "recent";

// Coefficients per style, for single-layer and multi-layer injection. For
// contrasting_pair the entries are {year, "recent"}.
struct CoefficientTable {
  std::map<PromptStyle, std::vector<float>> single;
  std::map<PromptStyle, std::vector<float>> multi;

  static CoefficientTable defaults();
  const std::vector<float>& lookup(PromptStyle style, LayerMode::Kind kind) const;
};

// Bare four-digit year, no punctuation.
std::string render_year(int year);

SteeringSpec temporal_prompt_set(PromptStyle style, int year, LayerMode mode,
                                 const CoefficientTable& table = CoefficientTable::defaults());

// Steering prompts run as <bos> + words, right-padded with <pad>; mtl counts the <bos>.
std::size_t max_token_length(const engine::ModelBundle& bundle, const std::vector<WeightedPrompt>& prompts);
engine::TokenIds steering_tokens(const engine::ModelBundle& bundle, std::string_view text, std::size_t mtl);

// Sum over prompts of coefficient x (block input at `layer` for the padded prompt).
Tensor build_layer_vector(const engine::ModelBundle& bundle, const SteeringSpec& spec, int layer);
// Same for several layers at once, one un-steered forward pass per prompt.
std::map<int, Tensor> build_layer_vectors(const engine::ModelBundle& bundle, const SteeringSpec& spec,
                                          const std::vector<int>& layers);

engine::InjectionPlan build_plan(const engine::ModelBundle& bundle, const SteeringSpec& spec, LayerMode mode);
// Assemble a plan from vectors already built for each layer of `mode`.
engine::InjectionPlan assemble_plan(const std::map<int, Tensor>& vectors, LayerMode mode);

// simultaneous: one plan holding every layer; independent: one single-entry plan per layer.
std::vector<engine::InjectionPlan> build_plans(const engine::ModelBundle& bundle, const SteeringSpec& spec,
                                               LayerMode mode, MultiReading reading);

// ---- JSON (de)serialization; ae payloads are base-64 little-endian f32.
std::string spec_to_json(const SteeringSpec& spec);
SteeringSpec spec_from_json(std::string_view text);
std::string plan_to_json(const engine::InjectionPlan& plan);
engine::InjectionPlan plan_from_json(std::string_view text);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace tempsteer::steering
