// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/steering.hpp"

#include <algorithm>
#include <cmath>

#include "tempsteer/error.hpp"

namespace tempsteer::steering {

using engine::InjectionPlan;
using engine::ModelBundle;
using engine::TokenIds;

std::string_view to_string(PromptStyle style) {
  switch (style) {
    case PromptStyle::year_only: return "year_only";
    case PromptStyle::context_phrase: return "context_phrase";
    case PromptStyle::contrasting_pair: return "contrasting_pair";
  }
  return "unknown";
}

PromptStyle parse_style(std::string_view name) {
  for (PromptStyle s : kAllStyles) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::invalid_argument, "unknown prompt style '" + std::string(name) + "'");
}

void SteeringSpec::validate() const {
  if (prompts.empty()) throw Error(ErrorKind::invalid_argument, "steering spec has no prompts");
  int pos = 0, neg = 0;
  for (const auto& p : prompts) {
    if (p.text.empty()) throw Error(ErrorKind::invalid_argument, "steering prompt text is empty");
    if (!std::isfinite(p.coefficient) || p.coefficient == 0.0f) {
      throw Error(ErrorKind::invalid_argument, "steering prompt '" + p.text + "' needs a finite non-zero coefficient");
    }
    (p.coefficient > 0 ? pos : neg)++;
  }
  if (style == PromptStyle::contrasting_pair) {
    if (pos != 1 || neg != 1) {
      throw Error(ErrorKind::invalid_argument,
                  "contrasting_pair needs exactly one positive and one negative prompt");
    }
  } else if (prompts.size() != 1) {
    throw Error(ErrorKind::invalid_argument, std::string(to_string(style)) + " takes exactly one prompt");
  }
}

// ---------------------------------------------------------------- layer modes

std::vector<int> LayerMode::layers() const {
  std::vector<int> out;
  for (int l = lo; l <= hi; ++l) out.push_back(l);
  return out;
}

std::string LayerMode::label() const {
  if (kind == Kind::single) return "L" + std::to_string(lo);
  return "L" + std::to_string(lo) + "-" + std::to_string(hi);
}

void LayerMode::validate(int n_layers) const {
  if (lo < 0 || hi < lo || hi >= n_layers || (kind == Kind::single && lo != hi)) {
    throw Error(ErrorKind::out_of_range, "layer range " + label() + " invalid for a " +
                                             std::to_string(n_layers) + "-layer model");
  }
}

// ---------------------------------------------------------------- prompt sets

CoefficientTable CoefficientTable::defaults() {
  CoefficientTable t;
  t.single = {{PromptStyle::year_only, {4.0f}},
              {PromptStyle::context_phrase, {4.0f}},
              {PromptStyle::contrasting_pair, {4.0f, -2.0f}}};
  t.multi = {{PromptStyle::year_only, {1.0f}},
             {PromptStyle::context_phrase, {1.0f}},
             {PromptStyle::contrasting_pair, {2.0f, -1.0f}}};
  return t;
}

const std::vector<float>& CoefficientTable::lookup(PromptStyle style, LayerMode::Kind kind) const {
  const auto& m = kind == LayerMode::Kind::single ? single : multi;
  auto it = m.find(style);
  if (it == m.end()) {
    throw Error(ErrorKind::config, "no coefficients for style " + std::string(to_string(style)));
  }
  const std::size_t want = style == PromptStyle::contrasting_pair ? 2 : 1;
  if (it->second.size() != want) {
    throw Error(ErrorKind::config, "style " + std::string(to_string(style)) + " needs " +
                                       std::to_string(want) + " coefficient(s)");
  }
  return it->second;
}

std::string render_year(int year) {
  if (year < kMinYear || year > kMaxYear) {
    throw Error(ErrorKind::out_of_range, "year " + std::to_string(year) + " outside [" +
                                             std::to_string(kMinYear) + ", " + std::to_string(kMaxYear) + "]");
  }
  return std::to_string(year);
}

SteeringSpec temporal_prompt_set(PromptStyle style, int year, LayerMode mode, const CoefficientTable& table) {
  const std::string y = render_year(year);
  const auto& c = table.lookup(style, mode.kind);
  SteeringSpec spec;
  spec.style = style;
  spec.year = year;
  switch (style) {
    case PromptStyle::year_only:
      spec.prompts = {{y, c[0]}};
      break;
    case PromptStyle::context_phrase:
      spec.prompts = {{"the year is " + y, c[0]}};
      break;
    case PromptStyle::contrasting_pair:
      spec.prompts = {{y, c[0]}, {std::string(kContrastWord), c[1]}};
      break;
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------- vectors

std::size_t max_token_length(const ModelBundle& bundle, const std::vector<WeightedPrompt>& prompts) {
  std::size_t mtl = 0;
  for (const auto& p : prompts) mtl = std::max(mtl, 1 + engine::encode(bundle, p.text).size());
  return mtl;
}

TokenIds steering_tokens(const ModelBundle& bundle, std::string_view text, std::size_t mtl) {
  TokenIds ids = engine::encode_with_bos(bundle, text);
  if (ids.size() > mtl) {
    throw Error(ErrorKind::invalid_argument, "steering prompt '" + std::string(text) + "' is longer than mtl " +
                                                 std::to_string(mtl));
  }
  ids.resize(mtl, engine::Vocab::pad_id);
  return ids;
}

std::map<int, Tensor> build_layer_vectors(const ModelBundle& bundle, const SteeringSpec& spec,
                                          const std::vector<int>& layers) {
  spec.validate();
  engine::TapRequest taps;
  taps.layers.insert(layers.begin(), layers.end());
  const std::size_t mtl = max_token_length(bundle, spec.prompts);
  const auto d = static_cast<std::size_t>(bundle.config().d_model);

  std::map<int, Tensor> out;
  for (int l : taps.layers) out.emplace(l, Tensor::zeros({mtl, d}));
  for (const auto& p : spec.prompts) {
    auto result = engine::prefill(bundle, steering_tokens(bundle, p.text, mtl), taps, nullptr);
    for (auto& [l, h] : result.tapped) {
      h *= p.coefficient;
      out.at(l) += h;
    }
  }
  return out;
}

Tensor build_layer_vector(const ModelBundle& bundle, const SteeringSpec& spec, int layer) {
  return std::move(build_layer_vectors(bundle, spec, {layer}).at(layer));
}

InjectionPlan assemble_plan(const std::map<int, Tensor>& vectors, LayerMode mode) {
  InjectionPlan plan;
  for (int l : mode.layers()) {
    auto it = vectors.find(l);
    if (it == vectors.end()) {
      throw Error(ErrorKind::invalid_argument, "no steering vector built for layer " + std::to_string(l));
    }
    plan.add(l, it->second);
  }
  return plan;
}

InjectionPlan build_plan(const ModelBundle& bundle, const SteeringSpec& spec, LayerMode mode) {
  mode.validate(bundle.config().n_layers);
  return assemble_plan(build_layer_vectors(bundle, spec, mode.layers()), mode);
}

std::vector<InjectionPlan> build_plans(const ModelBundle& bundle, const SteeringSpec& spec, LayerMode mode,
                                       MultiReading reading) {
  mode.validate(bundle.config().n_layers);
  auto vectors = build_layer_vectors(bundle, spec, mode.layers());
  std::vector<InjectionPlan> plans;
  if (reading == MultiReading::simultaneous) {
    plans.push_back(assemble_plan(vectors, mode));
  } else {
    for (int l : mode.layers()) plans.push_back(assemble_plan(vectors, LayerMode::single(l)));
  }
  return plans;
}

}  // namespace tempsteer::steering
