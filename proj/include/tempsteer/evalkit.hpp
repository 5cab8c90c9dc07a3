// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tempsteer::evalkit {

struct ScoredAnswer {
  std::string question_id;
  int year = 0;
  std::string prediction;
  double f1 = 0.0;
};

struct YearRange {
  int start = 0;
  int end = 0;  // inclusive

  YearRange() = default;
  YearRange(int s, int e);
  bool contains(int year) const { return year >= start && year <= end; }
  std::vector<int> years() const;

  static YearRange hog() { return {1945, 2020}; }
  static YearRange taqa() { return {2000, 2023}; }
};

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
std::vector<std::string> metric_tokens(std::string_view text);

// Multiset token-overlap F1 on normalized whitespace tokens.
// Both empty scores 1, exactly one empty scores 0.
double token_f1(std::string_view prediction, std::string_view gold);
double best_f1(std::string_view prediction, const std::vector<std::string>& golds);

// Mean of the scores; every answer must share one year.
double year_avg_f1(std::span<const ScoredAnswer> scored);

using ScoreTable = std::map<std::string, std::map<int, double>>;  // question -> year -> best_f1

// Mean over questions of the best score anywhere in `range`.
double f1_max(const ScoreTable& per_question, const YearRange& range);

std::string csv_escape(std::string_view field);
std::string format_score(double v);

struct ScoredCsvRow {
  std::string style;
  std::string layers;
  ScoredAnswer answer;
};

// Header: question_id,year,style,layers,prediction,f1
void write_scored_csv(std::ostream& out, std::span<const ScoredCsvRow> rows);

}  // namespace tempsteer::evalkit
