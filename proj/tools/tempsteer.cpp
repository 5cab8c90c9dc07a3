// SPDX-License-Identifier: Apache-2.0
//
// tempsteer: temporal steering experiments from the command line.
//
//   tempsteer bench --config exp.json [--mode relative|explicit] ...
//   tempsteer sweep --config exp.json [--mode single|multi] [--layers 4-7] ...
//   tempsteer filter --model m/ --dataset d.json --cutoff-year 2020 --out kept.json
//   tempsteer random-model --dataset d.json --out m/ --layers 8
//   tempsteer goldens --model m/ --goldens goldens.json
//
// Failures exit nonzero with {"error": <kind>, "message": <text>} on stderr.
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tempsteer/datasets.hpp"
#include "tempsteer/error.hpp"
#include "tempsteer/experiment.hpp"
#include "tempsteer/goldens.hpp"
#include "tempsteer/steering.hpp"
#include "tempsteer/sweep.hpp"

namespace ts = tempsteer;

namespace {

struct Overrides {
  std::string config;
  std::string model, dataset, schema, years, styles, layers, mode, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
};

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config JSON")->required();
  cmd->add_option("--model", o.model, "model container or directory");
  cmd->add_option("--dataset", o.dataset, "dataset JSON");
  cmd->add_option("--schema", o.schema, "dataset schema: hog | taqa");
  cmd->add_option("--years", o.years, "comma-separated years");
  cmd->add_option("--styles", o.styles, "comma-separated prompt styles");
  cmd->add_option("--layers", o.layers, "layer range, e.g. 4-7");
  cmd->add_option("--mode", o.mode, "relative | explicit | single | multi");
  cmd->add_option("--out", o.out, "report directory");
  cmd->add_option("--seed", o.seed, "seed for question subsampling");
  cmd->add_option("--threads", o.threads, "worker threads per row");
  cmd->add_flag("--quiet", o.quiet, "suppress progress logging");
}

ts::sweep::ExperimentConfig apply(const Overrides& o) {
  auto c = ts::sweep::load_experiment(o.config);
  if (!o.model.empty()) c.model = o.model;
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (!o.schema.empty()) c.schema = ts::datasets::parse_schema(o.schema);
  if (!o.years.empty()) c.years = ts::sweep::parse_int_list(o.years);
  if (!o.styles.empty()) {
    c.styles.clear();
    for (const auto& s : ts::sweep::split_list(o.styles)) c.styles.push_back(ts::steering::parse_style(s));
  }
  if (!o.layers.empty()) std::tie(c.layer_lo, c.layer_hi) = ts::sweep::parse_layer_range(o.layers);
  if (!o.mode.empty()) c.mode = ts::sweep::parse_mode(o.mode);
  if (!o.out.empty()) c.output = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  return c;
}

int run_experiment(const Overrides& o, bool bench) {
  const auto config = apply(o);
  if (bench != ts::sweep::is_benchmark(config.mode)) {
    throw ts::Error(ts::ErrorKind::config, std::string("mode ") + std::string(ts::sweep::to_string(config.mode)) +
                                               " cannot run under '" + (bench ? "bench" : "sweep") + "'");
  }
  const auto inputs = ts::sweep::load_inputs(config);
  std::ostream* log = o.quiet ? nullptr : &std::cerr;
  const auto result = ts::sweep::run(config, inputs.view(), log);
  ts::sweep::emit_report(result.rows, config.output, result.vector_builds);
  std::cout << ts::sweep::rows_csv(result.rows);
  return 0;
}

int run_filter(const std::string& model, const std::string& dataset, const std::string& schema, int cutoff,
               double threshold, std::size_t take, const std::string& fewshot, int max_new, const std::string& out) {
  const auto bundle = ts::engine::load_model(model);
  const auto records = ts::datasets::load_srot(dataset, ts::datasets::parse_schema(schema));
  ts::datasets::FilterOptions opts;
  opts.threshold = threshold;
  opts.take = take;
  opts.cutoff_year = cutoff;
  if (!fewshot.empty()) opts.fewshot = ts::datasets::load_fewshot(fewshot);
  opts.generation.max_new = max_new;
  opts.generation.stop_ids = ts::datasets::stop_ids_for(bundle, ts::datasets::default_stop_words());
  const auto kept = ts::datasets::filter_by_relative_f1(records, bundle, opts);
  ts::datasets::save_srot(out, kept);
  std::cout << "kept " << kept.size() << " of " << records.size() << " records\n";
  return 0;
}

void collect_words(std::string_view text, std::vector<std::string>& words) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
}

int run_random_model(const std::string& dataset, const std::string& schema, const std::string& fewshot,
                     ts::engine::ModelConfig cfg, std::uint64_t seed, const std::string& out) {
  std::vector<std::string> words;
  collect_words("A: as of the year is recent . , <YEAR>", words);
  const auto shots = fewshot.empty() ? ts::datasets::default_fewshot() : ts::datasets::load_fewshot(fewshot);
  for (const auto& s : shots) {
    collect_words(s.question, words);
    collect_words(s.answer, words);
  }
  if (!dataset.empty()) {
    const auto records = ts::datasets::load_srot(dataset, ts::datasets::parse_schema(schema));
    for (const auto& r : records) {
      collect_words(r.relative_question, words);
      collect_words(r.explicit_template, words);
      for (const auto& span : r.timeline) {
        for (const auto& a : span.answers) collect_words(a, words);
      }
    }
    if (!records.empty()) {
      const auto cov = ts::datasets::coverage(records);
      for (int y = cov.start; y <= cov.end; ++y) words.push_back(std::to_string(y));
    }
  }
  auto bundle = ts::engine::random_bundle(cfg, ts::engine::Vocab::from_words(words), seed);
  ts::engine::save_model(bundle, out);
  std::cout << "wrote " << out << " (" << bundle.vocab().size() << " tokens, " << bundle.config().n_layers
            << " layers)\n";
  return 0;
}

int run_goldens(const std::string& model, const std::string& goldens) {
  const auto bundle = ts::engine::load_model(model);
  const auto report = ts::engine::check_goldens(bundle, ts::engine::load_goldens(goldens));
  for (const auto& m : report.mismatches) {
    std::cout << "MISMATCH " << m.id << ": expected '" << ts::engine::decode(bundle, m.expected_ids) << "' got '"
              << ts::engine::decode(bundle, m.actual_ids) << "'\n";
  }
  std::cout << (report.total - report.mismatches.size()) << "/" << report.total << " goldens match\n";
  return report.ok() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tempsteer: temporal activation steering experiments"};
  app.require_subcommand(1);

  Overrides bench_o, sweep_o;
  add_run_options(app.add_subcommand("bench", "relative / explicit prompting benchmark"), bench_o);
  add_run_options(app.add_subcommand("sweep", "single- or multi-layer steering sweep"), sweep_o);

  auto* filter = app.add_subcommand("filter", "keep records answered well under relative prompting");
  std::string f_model, f_dataset, f_schema = "taqa", f_fewshot, f_out;
  int f_cutoff = 0, f_max_new = 8;
  double f_threshold = 0.5;
  std::size_t f_take = 1000;
  filter->add_option("--model", f_model)->required();
  filter->add_option("--dataset", f_dataset)->required();
  filter->add_option("--schema", f_schema);
  filter->add_option("--cutoff-year", f_cutoff, "year whose golds score the relative answer")->required();
  filter->add_option("--threshold", f_threshold);
  filter->add_option("--take", f_take);
  filter->add_option("--fewshot", f_fewshot);
  filter->add_option("--max-new", f_max_new);
  filter->add_option("--out", f_out)->required();

  auto* rnd = app.add_subcommand("random-model", "write a seeded random model covering a dataset's words");
  std::string r_dataset, r_schema = "hog", r_fewshot, r_out;
  std::uint64_t r_seed = 0;
  ts::engine::ModelConfig r_cfg;
  r_cfg.n_layers = 8;
  r_cfg.d_model = 32;
  r_cfg.n_heads = 2;
  r_cfg.d_ff = 64;
  r_cfg.max_seq = 256;
  std::string r_pos = "absolute-learned", r_norm = "rmsnorm";
  rnd->add_option("--dataset", r_dataset);
  rnd->add_option("--schema", r_schema);
  rnd->add_option("--fewshot", r_fewshot);
  rnd->add_option("--out", r_out)->required();
  rnd->add_option("--seed", r_seed);
  rnd->add_option("--layers", r_cfg.n_layers);
  rnd->add_option("--d-model", r_cfg.d_model);
  rnd->add_option("--heads", r_cfg.n_heads);
  rnd->add_option("--d-ff", r_cfg.d_ff);
  rnd->add_option("--max-seq", r_cfg.max_seq);
  rnd->add_option("--pos", r_pos, "absolute-learned | rotary");
  rnd->add_option("--norm", r_norm, "rmsnorm | layernorm");

  auto* gold = app.add_subcommand("goldens", "compare greedy outputs with exported goldens");
  std::string g_model, g_file;
  gold->add_option("--model", g_model)->required();
  gold->add_option("--goldens", g_file)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("bench")) return run_experiment(bench_o, true);
    if (app.got_subcommand("sweep")) return run_experiment(sweep_o, false);
    if (app.got_subcommand("filter")) {
      return run_filter(f_model, f_dataset, f_schema, f_cutoff, f_threshold, f_take, f_fewshot, f_max_new, f_out);
    }
    if (app.got_subcommand("random-model")) {
      r_cfg.pos_scheme = r_pos == "rotary" ? ts::engine::PosScheme::rotary : ts::engine::PosScheme::absolute_learned;
      r_cfg.norm = r_norm == "layernorm" ? ts::engine::NormKind::layernorm : ts::engine::NormKind::rmsnorm;
      return run_random_model(r_dataset, r_schema, r_fewshot, r_cfg, r_seed, r_out);
    }
    if (app.got_subcommand("goldens")) return run_goldens(g_model, g_file);
  } catch (const ts::Error& e) {
    std::cerr << nlohmann::json{{"error", ts::to_string(e.kind())}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
