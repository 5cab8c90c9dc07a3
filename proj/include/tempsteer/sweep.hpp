// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tempsteer/datasets.hpp"
#include "tempsteer/evalkit.hpp"
#include "tempsteer/experiment.hpp"
#include "tempsteer/model.hpp"

namespace tempsteer::sweep {

struct SweepRow {
  std::string mode;    // RunMode name
  std::string style;   // prompt style, "none" for benchmarks
  std::string layers;  // "L6", "L4-10", "-" for benchmarks
  int layer_lo = -1;
  int layer_hi = -1;
  int year = 0;
  double avg_f1 = 0.0;
  double f1_max = 0.0;
  std::size_t n_questions = 0;  // questions scored at `year`
  std::size_t n_failed = 0;     // questions that errored during generation
  double mean_wall_ms = 0.0;
  std::vector<evalkit::ScoredAnswer> scores;  // per question at `year`
};

struct VectorBuild {
  std::string style;
  int year = 0;
  std::string kind;  // single | multi
  std::vector<int> layers;
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<SweepRow> rows;
  std::vector<VectorBuild> vector_builds;
};

// Everything a run needs, already loaded. Shared read-only across workers.
struct RunInputs {
  const engine::ModelBundle& bundle;
  std::vector<datasets::SrotRecord> records;
  std::vector<datasets::FewShotExample> fewshot;
};

// Loads model, dataset and few-shot file named by the config.
struct LoadedInputs {
  engine::ModelBundle bundle;
  std::vector<datasets::SrotRecord> records;
  std::vector<datasets::FewShotExample> fewshot;

  RunInputs view() const { return {bundle, records, fewshot}; }
};
LoadedInputs load_inputs(const ExperimentConfig& config);

// Seeded subset of `max_questions` records in their original order (all when 0).
std::vector<datasets::SrotRecord> select_questions(const std::vector<datasets::SrotRecord>& records,
                                                   std::size_t max_questions, std::uint64_t seed);

// Relative or explicit prompting without steering: one row per year.
RunResult run_benchmark(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log = nullptr);
// Steered runs on the relative prompt: one row per (style, year, layer set).
RunResult run_sweep(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log = nullptr);
// Dispatches on config.mode.
RunResult run(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log = nullptr);

// Orders rows by (style, year, layer range).
void sort_rows(std::vector<SweepRow>& rows);

// Best avg_f1 per (style, year); ties keep the earliest row in sorted order.
std::vector<SweepRow> best_rows(std::span<const SweepRow> rows);

// Writes <dir>/rows.csv, <dir>/scores.csv and <dir>/report.json.
void emit_report(std::span<const SweepRow> rows, const std::filesystem::path& dir,
                 const std::vector<VectorBuild>& builds = {});
std::string rows_csv(std::span<const SweepRow> rows);
std::string scores_csv(std::span<const SweepRow> rows);
std::string report_json(std::span<const SweepRow> rows, const std::vector<VectorBuild>& builds);

}  // namespace tempsteer::sweep
