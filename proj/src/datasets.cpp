// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "tempsteer/error.hpp"

namespace tempsteer::datasets {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string replace_all(std::string text, std::string_view needle, std::string_view with) {
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + with.size())) {
    text.replace(pos, needle.size(), with);
  }
  return text;
}

}  // namespace

void SrotRecord::validate() const {
  auto fail = [this](const std::string& msg) {
    throw Error(ErrorKind::dataset, "record '" + id + "': " + msg);
  };
  if (id.empty()) throw Error(ErrorKind::dataset, "record with empty id");
  if (relative_question.empty()) fail("empty relative_question");
  if (contains_year_token(relative_question)) fail("relative_question mentions a year");
  if (count_occurrences(explicit_template, kYearPlaceholder) != 1) {
    fail("explicit_template must contain exactly one <YEAR> placeholder");
  }
  if (timeline.empty()) fail("empty timeline");
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    const auto& s = timeline[i];
    if (s.answers.empty()) fail("span " + std::to_string(i) + " has no answers");
    if (s.start > s.end) fail("span " + std::to_string(s.start) + "-" + std::to_string(s.end) + " ends before it starts");
    if (i > 0) {
      const auto& prev = timeline[i - 1];
      if (s.start <= prev.end) {
        fail("spans " + std::to_string(prev.start) + "-" + std::to_string(prev.end) + " and " +
             std::to_string(s.start) + "-" + std::to_string(s.end) + " overlap or are out of order");
      }
    }
  }
}

Schema parse_schema(std::string_view name) {
  if (name == "hog") return Schema::hog;
  if (name == "taqa") return Schema::taqa;
  throw Error(ErrorKind::invalid_argument, "unknown dataset schema '" + std::string(name) + "'");
}

std::string_view to_string(Schema schema) { return schema == Schema::hog ? "hog" : "taqa"; }

evalkit::YearRange default_year_range(Schema schema) {
  return schema == Schema::hog ? evalkit::YearRange::hog() : evalkit::YearRange::taqa();
}

std::vector<SrotRecord> parse_srot(std::string_view json_text, Schema schema) {
  if (blank(json_text)) return {};
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::dataset, std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!root.is_array()) throw Error(ErrorKind::dataset, "dataset must be a JSON array of records");

  std::vector<SrotRecord> records;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const json& j = root[i];
    SrotRecord r;
    r.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "#" + std::to_string(i);
    try {
      if (schema == Schema::hog) {
        r.subject = j.at("subject").get<std::string>();
        r.relation = j.at("relation").get<std::string>();
      } else {
        r.subject = j.value("subject", "");
        r.relation = j.value("relation", "");
      }
      j.at("id").get_to(r.id);
      r.relative_question = j.at("relative_question").get<std::string>();
      r.explicit_template = j.at("explicit_template").get<std::string>();
      for (const auto& s : j.at("timeline")) {
        TimelineSpan span;
        span.answers = s.at("answers").get<std::vector<std::string>>();
        span.start = s.at("start").get<int>();
        span.end = s.at("end").get<int>();
        r.timeline.push_back(std::move(span));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::dataset, "record '" + r.id + "': " + e.what());
    }
    r.validate();
    if (!seen.insert(r.id).second) throw Error(ErrorKind::dataset, "duplicate record id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SrotRecord> load_srot(const std::filesystem::path& path, Schema schema) {
  return parse_srot(read_text(path), schema);
}

std::string dump_srot(const std::vector<SrotRecord>& records) {
  json root = json::array();
  for (const auto& r : records) {
    json timeline = json::array();
    for (const auto& s : r.timeline) timeline.push_back({{"answers", s.answers}, {"start", s.start}, {"end", s.end}});
    root.push_back({{"id", r.id},
                    {"subject", r.subject},
                    {"relation", r.relation},
                    {"relative_question", r.relative_question},
                    {"explicit_template", r.explicit_template},
                    {"timeline", timeline}});
  }
  return root.dump(2) + "\n";
}

void save_srot(const std::filesystem::path& path, const std::vector<SrotRecord>& records) {
  write_text(path, dump_srot(records));
}

evalkit::YearRange coverage(const std::vector<SrotRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::dataset, "coverage of an empty dataset");
  int lo = records.front().timeline.front().start;
  int hi = records.front().timeline.back().end;
  for (const auto& r : records) {
    lo = std::min(lo, r.timeline.front().start);
    hi = std::max(hi, r.timeline.back().end);
  }
  return {lo, hi};
}

std::vector<std::string> answers_at(const SrotRecord& record, int year) {
  for (const auto& s : record.timeline) {
    if (year >= s.start && year <= s.end) return s.answers;
  }
  return {};
}

// ---------------------------------------------------------------- few-shot

std::vector<FewShotExample> parse_fewshot(std::string_view json_text) {
  std::vector<FewShotExample> out;
  try {
    for (const auto& j : json::parse(json_text)) {
      out.push_back({j.at("q").get<std::string>(), j.at("a").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::dataset, std::string("few-shot file: ") + e.what());
  }
  return out;
}

std::vector<FewShotExample> load_fewshot(const std::filesystem::path& path) {
  return parse_fewshot(read_text(path));
}

std::string dump_fewshot(const std::vector<FewShotExample>& examples) {
  json root = json::array();
  for (const auto& e : examples) root.push_back({{"q", e.question}, {"a", e.answer}});
  return root.dump(2) + "\n";
}

const std::vector<FewShotExample>& default_fewshot() {
  static const std::vector<FewShotExample> examples{
      {"What is the capital of France ?", "Paris"},
      {"How many legs does a spider have ?", "eight"},
      {"What is the largest ocean on Earth ?", "the Pacific Ocean"},
      {"What color is the sky on a clear day ?", "blue"},
  };
  return examples;
}

// ---------------------------------------------------------------- prompts

bool contains_year_token(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j - i == 4) return true;
    i = j;
  }
  return false;
}

// The comma stands alone so the year stays a bare token under word-level vocabularies.
std::string explicit_prefix(int year) { return "as of the year " + std::to_string(year) + " ,"; }

std::string build_prompt(const SrotRecord& record, PromptMode mode, const std::vector<FewShotExample>& fewshot) {
  const bool relative = mode.kind == PromptMode::Kind::relative;
  auto question_line = [&](const std::string& q) {
    return relative ? q : explicit_prefix(mode.year) + " " + q;
  };

  std::string out;
  for (const auto& ex : fewshot) {
    if (relative && (contains_year_token(ex.question) || contains_year_token(ex.answer))) {
      throw Error(ErrorKind::dataset, "few-shot example '" + ex.question + "' mentions a year in relative mode");
    }
    out += question_line(ex.question) + "\nA: " + ex.answer + "\n\n";
  }
  if (relative) {
    if (contains_year_token(record.relative_question)) {
      throw Error(ErrorKind::dataset, "record '" + record.id + "': relative_question mentions a year");
    }
    out += record.relative_question;
  } else {
    out += question_line(replace_all(record.explicit_template, kYearPlaceholder, std::to_string(mode.year)));
  }
  out += "\nA:";
  return out;
}

// ---------------------------------------------------------------- answering

std::set<engine::TokenId> stop_ids_for(const engine::ModelBundle& bundle, const std::vector<std::string>& words) {
  std::set<engine::TokenId> ids;
  for (const auto& w : words) {
    if (auto id = bundle.vocab().find(w)) ids.insert(*id);
  }
  return ids;
}

std::string generate_answer(const engine::ModelBundle& bundle, std::string_view prompt,
                            const engine::InjectionPlan* plan, const engine::GenerateOptions& options) {
  const auto tokens = engine::encode_with_bos(bundle, prompt);
  return engine::decode(bundle, engine::generate(bundle, tokens, plan, options));
}

std::vector<SrotRecord> filter_by_relative_f1(const std::vector<SrotRecord>& records,
                                              const engine::ModelBundle& bundle, const FilterOptions& options) {
  std::vector<SrotRecord> kept;
  for (const auto& r : records) {
    if (kept.size() >= options.take) break;
    const auto golds = answers_at(r, options.cutoff_year);
    if (golds.empty()) continue;
    const std::string answer =
        generate_answer(bundle, build_prompt(r, PromptMode::relative(), options.fewshot), nullptr, options.generation);
    if (evalkit::best_f1(answer, golds) > options.threshold) kept.push_back(r);
  }
  return kept;
}

}  // namespace tempsteer::datasets
