// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/goldens.hpp"

#include <fstream>
#include <iterator>

#include <json.hpp>

#include "tempsteer/engine.hpp"
#include "tempsteer/error.hpp"

namespace tempsteer::engine {

using nlohmann::json;

GoldenSet parse_goldens(std::string_view json_text) {
  GoldenSet g;
  try {
    const json j = json::parse(json_text);
    g.max_new = j.value("max_new", g.max_new);
    if (j.contains("stop")) {
      g.stop = j.at("stop").get<std::vector<std::string>>();
      g.has_stop = true;
    }
    for (const auto& c : j.at("cases")) {
      GoldenCase gc;
      gc.id = c.value("id", std::to_string(g.cases.size()));
      gc.prompt = c.at("prompt").get<std::string>();
      gc.expected_ids = c.at("expected_ids").get<TokenIds>();
      gc.expected = c.value("expected", "");
      g.cases.push_back(std::move(gc));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("goldens: ") + e.what());
  }
  return g;
}

GoldenSet load_goldens(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_goldens(std::string(std::istreambuf_iterator<char>(in), {}));
}

GoldenReport check_goldens(const ModelBundle& bundle, const GoldenSet& goldens) {
  GenerateOptions opts;
  opts.max_new = goldens.max_new;
  if (goldens.has_stop) {
    for (const auto& s : goldens.stop) {
      if (auto id = bundle.vocab().find(s)) opts.stop_ids.insert(*id);
    }
  } else {
    opts.stop_ids = default_stop_ids(bundle);
  }
  GoldenReport report;
  for (const auto& c : goldens.cases) {
    ++report.total;
    TokenIds actual = generate(bundle, encode_with_bos(bundle, c.prompt), nullptr, opts);
    if (actual != c.expected_ids) report.mismatches.push_back({c.id, c.expected_ids, std::move(actual)});
  }
  return report;
}

}  // namespace tempsteer::engine
