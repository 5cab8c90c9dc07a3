// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <tuple>

#include "tempsteer/error.hpp"
#include "tempsteer/steering.hpp"

namespace tempsteer::sweep {

using datasets::PromptMode;
using datasets::SrotRecord;
using steering::LayerMode;
using steering::PromptStyle;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

struct Prediction {
  std::string text;
  bool ok = false;
  double wall_ms = 0.0;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index writes
// only its own slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

class Evaluator {
 public:
  Evaluator(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log)
      : config_(config), inputs_(inputs), log_(log) {
    options_.max_new = config.max_new;
    options_.stop_ids = datasets::stop_ids_for(inputs.bundle, config.stop_words);
  }

  // Greedy answers for every record. Per-question failures are logged and
  // leave the prediction marked not ok.
  std::vector<Prediction> answer_all(PromptMode mode, const engine::InjectionPlan* plan) {
    const auto& records = inputs_.records;
    std::vector<Prediction> out(records.size());
    parallel_for(records.size(), config_.threads, [&](std::size_t i) {
      try {
        const std::string prompt = datasets::build_prompt(records[i], mode, inputs_.fewshot);
        const auto tokens = engine::encode_with_bos(inputs_.bundle, prompt);
        const auto start = Clock::now();
        const auto ids = engine::generate(inputs_.bundle, tokens, plan, options_);
        out[i].wall_ms = elapsed_ms(start);
        out[i].text = engine::decode(inputs_.bundle, ids);
        out[i].ok = true;
      } catch (const Error& e) {
        std::lock_guard lock(log_mu_);
        if (log_) *log_ << "[tempsteer] question " << records[i].id << " failed: " << e.what() << '\n';
      }
    });
    return out;
  }

  SweepRow score(const std::vector<Prediction>& preds, int year) const {
    const auto& records = inputs_.records;
    const auto range = config_.effective_f1max_range();
    SweepRow row;
    row.year = year;
    evalkit::ScoreTable table;
    double wall_sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!preds[i].ok) {
        ++row.n_failed;
        continue;
      }
      ++ok;
      wall_sum += preds[i].wall_ms;
      const auto golds = datasets::answers_at(records[i], year);
      if (!golds.empty()) {
        row.scores.push_back({records[i].id, year, preds[i].text, evalkit::best_f1(preds[i].text, golds)});
      }
      auto& by_year = table[records[i].id];
      for (int y = range.start; y <= range.end; ++y) {
        const auto g = datasets::answers_at(records[i], y);
        by_year[y] = g.empty() ? 0.0 : evalkit::best_f1(preds[i].text, g);
      }
    }
    row.n_questions = row.scores.size();
    row.avg_f1 = row.scores.empty() ? 0.0 : evalkit::year_avg_f1(row.scores);
    row.f1_max = table.empty() ? 0.0 : evalkit::f1_max(table, range);
    row.mean_wall_ms = ok ? wall_sum / static_cast<double>(ok) : 0.0;
    return row;
  }

  void log(const std::string& line) {
    std::lock_guard lock(log_mu_);
    if (log_) *log_ << "[tempsteer] " << line << '\n';
  }

 private:
  const ExperimentConfig& config_;
  const RunInputs& inputs_;
  std::ostream* log_;
  std::mutex log_mu_;
  engine::GenerateOptions options_;
};

void check_inputs(const ExperimentConfig& config, const RunInputs& inputs) {
  config.validate_against(inputs.bundle.config().n_layers, inputs.records);
}

int style_rank(const std::string& style) {
  for (std::size_t i = 0; i < std::size(steering::kAllStyles); ++i) {
    if (steering::to_string(steering::kAllStyles[i]) == style) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

// ---------------------------------------------------------------- inputs

LoadedInputs load_inputs(const ExperimentConfig& config) {
  config.validate();
  auto records = datasets::load_srot(config.dataset, config.schema);
  records = select_questions(records, config.max_questions, config.seed);
  auto fewshot = config.fewshot ? datasets::load_fewshot(*config.fewshot) : datasets::default_fewshot();
  return {engine::load_model(config.model), std::move(records), std::move(fewshot)};
}

std::vector<SrotRecord> select_questions(const std::vector<SrotRecord>& records, std::size_t max_questions,
                                         std::uint64_t seed) {
  if (max_questions == 0 || max_questions >= records.size()) return records;
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < max_questions; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_questions);
  std::sort(idx.begin(), idx.end());
  std::vector<SrotRecord> out;
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

// ---------------------------------------------------------------- runs

RunResult run_benchmark(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log) {
  if (!is_benchmark(config.mode)) {
    throw Error(ErrorKind::config, "run_benchmark: mode " + std::string(to_string(config.mode)) + " is a sweep");
  }
  check_inputs(config, inputs);
  Evaluator eval(config, inputs, log);
  RunResult result;

  std::vector<Prediction> relative;
  if (config.mode == RunMode::benchmark_relative) relative = eval.answer_all(PromptMode::relative(), nullptr);

  for (int year : config.years) {
    const auto preds = config.mode == RunMode::benchmark_relative
                           ? relative
                           : eval.answer_all(PromptMode::explicit_year(year), nullptr);
    SweepRow row = eval.score(preds, year);
    row.mode = to_string(config.mode);
    row.style = "none";
    row.layers = "-";
    result.rows.push_back(std::move(row));
  }
  sort_rows(result.rows);
  return result;
}

RunResult run_sweep(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log) {
  if (is_benchmark(config.mode)) {
    throw Error(ErrorKind::config, "run_sweep: mode " + std::string(to_string(config.mode)) + " is a benchmark");
  }
  check_inputs(config, inputs);
  Evaluator eval(config, inputs, log);
  RunResult result;

  const bool multi = config.mode == RunMode::sweep_multi;
  std::vector<LayerMode> modes;
  for (int l = config.layer_lo; l <= config.layer_hi; ++l) {
    modes.push_back(multi ? LayerMode::multi(l, config.layer_lo) : LayerMode::single(l));
  }
  std::vector<int> all_layers;
  for (int l = config.layer_lo; l <= config.layer_hi; ++l) all_layers.push_back(l);

  for (PromptStyle style : config.styles) {
    for (int year : config.years) {
      // One un-steered extraction per (style, year) covers every layer in the sweep.
      const auto spec = steering::temporal_prompt_set(style, year, modes.front(), config.coefficients);
      const auto start = Clock::now();
      const auto vectors = steering::build_layer_vectors(inputs.bundle, spec, all_layers);
      VectorBuild build{std::string(steering::to_string(style)), year, multi ? "multi" : "single", all_layers,
                        elapsed_ms(start)};
      eval.log("built " + build.style + "/" + std::to_string(year) + " " + build.kind + " vectors for layers " +
               std::to_string(config.layer_lo) + ".." + std::to_string(config.layer_hi) + " in " +
               evalkit::format_score(build.wall_ms) + " ms");
      result.vector_builds.push_back(std::move(build));

      for (const LayerMode& mode : modes) {
        const auto plan = steering::assemble_plan(vectors, mode);
        const auto preds = eval.answer_all(PromptMode::relative(), &plan);
        SweepRow row = eval.score(preds, year);
        row.mode = to_string(config.mode);
        row.style = steering::to_string(style);
        row.layers = mode.label();
        row.layer_lo = mode.lo;
        row.layer_hi = mode.hi;
        result.rows.push_back(std::move(row));
      }
    }
  }
  sort_rows(result.rows);
  return result;
}

RunResult run(const ExperimentConfig& config, const RunInputs& inputs, std::ostream* log) {
  return is_benchmark(config.mode) ? run_benchmark(config, inputs, log) : run_sweep(config, inputs, log);
}

void sort_rows(std::vector<SweepRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tuple(style_rank(a.style), a.year, a.layer_lo, a.layer_hi) <
           std::tuple(style_rank(b.style), b.year, b.layer_lo, b.layer_hi);
  });
}

std::vector<SweepRow> best_rows(std::span<const SweepRow> rows) {
  std::vector<SweepRow> sorted(rows.begin(), rows.end());
  sort_rows(sorted);
  std::vector<SweepRow> best;
  for (const auto& r : sorted) {
    if (!best.empty() && best.back().style == r.style && best.back().year == r.year) {
      if (r.avg_f1 > best.back().avg_f1) best.back() = r;
    } else {
      best.push_back(r);
    }
  }
  return best;
}

}  // namespace tempsteer::sweep
