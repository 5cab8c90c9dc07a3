// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tempsteer/datasets.hpp"
#include "tempsteer/evalkit.hpp"
#include "tempsteer/steering.hpp"

namespace tempsteer::sweep {

enum class RunMode { benchmark_relative, benchmark_explicit, sweep_single, sweep_multi };

std::string_view to_string(RunMode mode);
// Accepts the full names and the short forms relative/explicit/single/multi.
RunMode parse_mode(std::string_view name);
bool is_benchmark(RunMode mode);

struct ExperimentConfig {
  std::filesystem::path model;
  std::filesystem::path dataset;
  datasets::Schema schema = datasets::Schema::hog;
  std::vector<int> years;
  std::vector<steering::PromptStyle> styles{std::begin(steering::kAllStyles), std::end(steering::kAllStyles)};
  RunMode mode = RunMode::benchmark_relative;
  // sweep_single: layers [layer_lo, layer_hi]; sweep_multi: ranges [layer_lo, k] for k in [layer_lo, layer_hi].
  int layer_lo = steering::LayerMode::kDefaultMultiStart;
  int layer_hi = steering::LayerMode::kDefaultMultiStart;
  std::optional<evalkit::YearRange> f1max_range;  // defaults to the schema's range
  std::optional<std::filesystem::path> fewshot;   // defaults to the built-in set
  std::filesystem::path output = "tempsteer-out";
  std::uint64_t seed = 0;
  int max_new = 8;
  std::vector<std::string> stop_words = datasets::default_stop_words();
  int threads = 1;
  std::size_t max_questions = 0;  // 0 keeps every record; otherwise a seeded subset
  steering::CoefficientTable coefficients = steering::CoefficientTable::defaults();

  evalkit::YearRange effective_f1max_range() const;

  // Checks that need neither the model nor the dataset.
  void validate() const;
  // Layer bounds against the model, years against dataset coverage.
  void validate_against(int n_layers, const std::vector<datasets::SrotRecord>& records) const;
};

// Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
std::string dump_experiment(const ExperimentConfig& config);

// "4-7" or "4,7" or "6".
std::pair<int, int> parse_layer_range(std::string_view text);
std::vector<int> parse_int_list(std::string_view text);
std::vector<std::string> split_list(std::string_view text);

// Number of rows a run of this config emits.
std::size_t expected_row_count(const ExperimentConfig& config);

}  // namespace tempsteer::sweep
