// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tempsteer/engine.hpp"
#include "tempsteer/evalkit.hpp"
#include "tempsteer/model.hpp"

namespace tempsteer::datasets {

inline constexpr std::string_view kYearPlaceholder = "<YEAR>";

struct TimelineSpan {
  std::vector<std::string> answers;
  int start = 0;
  int end = 0;  // inclusive

  friend bool operator==(const TimelineSpan&, const TimelineSpan&) = default;
};

// Subject / relation question whose answer changes over time. Spans are
// sorted and never overlap, so any year has at most one valid answer set.
struct SrotRecord {
  std::string id;
  std::string subject;
  std::string relation;
  std::string relative_question;
  std::string explicit_template;  // exactly one <YEAR>
  std::vector<TimelineSpan> timeline;

  void validate() const;
  friend bool operator==(const SrotRecord&, const SrotRecord&) = default;
};

struct FewShotExample {
  std::string question;
  std::string answer;

  friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

// Both shapes share the canonical JSON layout. HOG records must name a
// subject and relation; TAQA records may leave them out.
enum class Schema { hog, taqa };
Schema parse_schema(std::string_view name);
std::string_view to_string(Schema schema);
evalkit::YearRange default_year_range(Schema schema);

std::vector<SrotRecord> parse_srot(std::string_view json_text, Schema schema);
std::vector<SrotRecord> load_srot(const std::filesystem::path& path, Schema schema);
std::string dump_srot(const std::vector<SrotRecord>& records);
void save_srot(const std::filesystem::path& path, const std::vector<SrotRecord>& records);

// Smallest start and largest end across every record's timeline.
evalkit::YearRange coverage(const std::vector<SrotRecord>& records);

std::vector<std::string> answers_at(const SrotRecord& record, int year);

std::vector<FewShotExample> parse_fewshot(std::string_view json_text);
std::vector<FewShotExample> load_fewshot(const std::filesystem::path& path);
std::string dump_fewshot(const std::vector<FewShotExample>& examples);
// Version 1 of the generic priming set, mirrored by data/fewshot_v1.json.
const std::vector<FewShotExample>& default_fewshot();

// True when the text holds a standalone run of exactly four digits.
bool contains_year_token(std::string_view text);

struct PromptMode {
  enum class Kind { relative, explicit_year };
  Kind kind = Kind::relative;
  int year = 0;

  static PromptMode relative() { return {Kind::relative, 0}; }
  static PromptMode explicit_year(int y) { return {Kind::explicit_year, y}; }
};

std::string explicit_prefix(int year);

// Few-shot blocks, then the test question:
//
//   <question>
//   A: <answer>
//
//   <test question>
//   A:
//
// Explicit mode starts every question line with "as of the year <year> ,".
std::string build_prompt(const SrotRecord& record, PromptMode mode, const std::vector<FewShotExample>& fewshot);

std::set<engine::TokenId> stop_ids_for(const engine::ModelBundle& bundle, const std::vector<std::string>& words);
inline const std::vector<std::string>& default_stop_words() {
  static const std::vector<std::string> words{"<eos>", ".", "A:"};
  return words;
}

// Greedy answer text for a prompt, optionally steered.
std::string generate_answer(const engine::ModelBundle& bundle, std::string_view prompt,
                            const engine::InjectionPlan* plan, const engine::GenerateOptions& options);

struct FilterOptions {
  double threshold = 0.5;
  std::size_t take = 1000;
  int cutoff_year = 0;  // golds for the relative answer come from this year
  std::vector<FewShotExample> fewshot = default_fewshot();
  engine::GenerateOptions generation;
};

// Keeps records whose relative answer scores strictly above the threshold
// against the cutoff-year golds, in input order, truncated to `take`.
std::vector<SrotRecord> filter_by_relative_f1(const std::vector<SrotRecord>& records,
                                              const engine::ModelBundle& bundle, const FilterOptions& options);

}  // namespace tempsteer::datasets
