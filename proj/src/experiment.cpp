// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/experiment.hpp"

#include <charconv>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "tempsteer/error.hpp"

namespace tempsteer::sweep {

using nlohmann::json;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::benchmark_relative: return "benchmark_relative";
    case RunMode::benchmark_explicit: return "benchmark_explicit";
    case RunMode::sweep_single: return "sweep_single";
    case RunMode::sweep_multi: return "sweep_multi";
  }
  return "unknown";
}

RunMode parse_mode(std::string_view name) {
  if (name == "benchmark_relative" || name == "relative") return RunMode::benchmark_relative;
  if (name == "benchmark_explicit" || name == "explicit") return RunMode::benchmark_explicit;
  if (name == "sweep_single" || name == "single") return RunMode::sweep_single;
  if (name == "sweep_multi" || name == "multi") return RunMode::sweep_multi;
  throw Error(ErrorKind::config, "unknown mode '" + std::string(name) + "'");
}

bool is_benchmark(RunMode mode) {
  return mode == RunMode::benchmark_relative || mode == RunMode::benchmark_explicit;
}

evalkit::YearRange ExperimentConfig::effective_f1max_range() const {
  return f1max_range ? *f1max_range : datasets::default_year_range(schema);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, "experiment config: " + msg); };
  if (model.empty()) fail("model path is required");
  if (dataset.empty()) fail("dataset path is required");
  if (years.empty()) fail("at least one year is required");
  for (int y : years) {
    if (y < steering::kMinYear || y > steering::kMaxYear) fail("year " + std::to_string(y) + " is not a four-digit year");
  }
  if (!is_benchmark(mode) && styles.empty()) fail("sweeps need at least one style");
  if (!is_benchmark(mode) && (layer_lo < 0 || layer_hi < layer_lo)) {
    fail("layer range " + std::to_string(layer_lo) + "-" + std::to_string(layer_hi) + " is empty or negative");
  }
  if (max_new < 1) fail("max_new must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  for (auto s : styles) {
    coefficients.lookup(s, steering::LayerMode::Kind::single);
    coefficients.lookup(s, steering::LayerMode::Kind::multi);
  }
}

void ExperimentConfig::validate_against(int n_layers, const std::vector<datasets::SrotRecord>& records) const {
  validate();
  if (records.empty()) throw Error(ErrorKind::config, "experiment config: dataset has no records");
  if (!is_benchmark(mode) && layer_hi >= n_layers) {
    throw Error(ErrorKind::config, "experiment config: layer " + std::to_string(layer_hi) + " outside a " +
                                       std::to_string(n_layers) + "-layer model");
  }
  const auto cov = datasets::coverage(records);
  for (int y : years) {
    if (!cov.contains(y)) {
      throw Error(ErrorKind::config, "experiment config: year " + std::to_string(y) + " outside dataset coverage " +
                                         std::to_string(cov.start) + "-" + std::to_string(cov.end));
    }
  }
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= text.size()) {
    std::size_t j = text.find(',', i);
    if (j == std::string_view::npos) j = text.size();
    std::string_view part = text.substr(i, j - i);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    if (!part.empty()) out.emplace_back(part);
    i = j + 1;
  }
  return out;
}

namespace {

int parse_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::config, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::map<steering::PromptStyle, std::vector<float>> parse_coeff_block(const json& j,
                                                                     std::map<steering::PromptStyle, std::vector<float>> into) {
  for (const auto& [name, values] : j.items()) into[steering::parse_style(name)] = values.get<std::vector<float>>();
  return into;
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  for (const auto& part : split_list(text)) out.push_back(parse_int(part));
  return out;
}

std::pair<int, int> parse_layer_range(std::string_view text) {
  const auto sep = text.find_first_of("-,:");
  if (sep == std::string_view::npos) {
    const int l = parse_int(text);
    return {l, l};
  }
  return {parse_int(text.substr(0, sep)), parse_int(text.substr(sep + 1))};
}

ExperimentConfig parse_experiment(std::string_view json_text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    if (j.contains("model")) c.model = resolve(base_dir, j["model"].get<std::string>());
    if (j.contains("dataset")) c.dataset = resolve(base_dir, j["dataset"].get<std::string>());
    if (j.contains("schema")) c.schema = datasets::parse_schema(j["schema"].get<std::string>());
    if (j.contains("years")) c.years = j["years"].get<std::vector<int>>();
    if (j.contains("styles")) {
      c.styles.clear();
      for (const auto& s : j["styles"]) c.styles.push_back(steering::parse_style(s.get<std::string>()));
    }
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("layers")) {
      const auto& l = j["layers"];
      if (l.is_string()) {
        std::tie(c.layer_lo, c.layer_hi) = parse_layer_range(l.get<std::string>());
      } else {
        auto v = l.get<std::vector<int>>();
        if (v.size() != 2) throw Error(ErrorKind::config, "experiment config: layers must be [lo, hi]");
        c.layer_lo = v[0];
        c.layer_hi = v[1];
      }
    }
    if (j.contains("f1max_range")) {
      auto v = j["f1max_range"].get<std::vector<int>>();
      if (v.size() != 2) throw Error(ErrorKind::config, "experiment config: f1max_range must be [start, end]");
      c.f1max_range = evalkit::YearRange(v[0], v[1]);
    }
    if (j.contains("fewshot") && !j["fewshot"].is_null()) c.fewshot = resolve(base_dir, j["fewshot"].get<std::string>());
    if (j.contains("output")) c.output = resolve(base_dir, j["output"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.max_new = j.value("max_new", c.max_new);
    if (j.contains("stop_words")) c.stop_words = j["stop_words"].get<std::vector<std::string>>();
    c.threads = j.value("threads", c.threads);
    c.max_questions = j.value("max_questions", c.max_questions);
    if (j.contains("coefficients")) {
      const auto& co = j["coefficients"];
      if (co.contains("single")) c.coefficients.single = parse_coeff_block(co["single"], c.coefficients.single);
      if (co.contains("multi")) c.coefficients.multi = parse_coeff_block(co["multi"], c.coefficients.multi);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("experiment config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_experiment(std::string(std::istreambuf_iterator<char>(in), {}), path.parent_path());
}

std::string dump_experiment(const ExperimentConfig& c) {
  json styles = json::array();
  for (auto s : c.styles) styles.push_back(steering::to_string(s));
  auto coeffs = [](const std::map<steering::PromptStyle, std::vector<float>>& m) {
    json o = json::object();
    for (const auto& [s, v] : m) o[std::string(steering::to_string(s))] = v;
    return o;
  };
  const auto range = c.effective_f1max_range();
  json j = {{"model", c.model.string()},
            {"dataset", c.dataset.string()},
            {"schema", datasets::to_string(c.schema)},
            {"years", c.years},
            {"styles", styles},
            {"mode", to_string(c.mode)},
            {"layers", {c.layer_lo, c.layer_hi}},
            {"f1max_range", {range.start, range.end}},
            {"fewshot", c.fewshot ? json(c.fewshot->string()) : json(nullptr)},
            {"output", c.output.string()},
            {"seed", c.seed},
            {"max_new", c.max_new},
            {"stop_words", c.stop_words},
            {"threads", c.threads},
            {"max_questions", c.max_questions},
            {"coefficients", {{"single", coeffs(c.coefficients.single)}, {"multi", coeffs(c.coefficients.multi)}}}};
  return j.dump(2) + "\n";
}

std::size_t expected_row_count(const ExperimentConfig& c) {
  if (is_benchmark(c.mode)) return c.years.size();
  const auto layer_configs = static_cast<std::size_t>(c.layer_hi - c.layer_lo + 1);
  return c.styles.size() * c.years.size() * layer_configs;
}

}  // namespace tempsteer::sweep
