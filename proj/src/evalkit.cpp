// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <unordered_map>

#include "tempsteer/error.hpp"

namespace tempsteer::evalkit {

YearRange::YearRange(int s, int e) : start(s), end(e) {
  if (s > e) {
    throw Error(ErrorKind::invalid_argument, "year range " + std::to_string(s) + "-" + std::to_string(e) +
                                                 " has start after end");
  }
}

std::vector<int> YearRange::years() const {
  std::vector<int> out;
  for (int y = start; y <= end; ++y) out.push_back(y);
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const auto& tok : metric_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::vector<std::string> metric_tokens(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::ispunct(u)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(u)));
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    std::size_t j = i;
    while (j < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[j]))) ++j;
    if (j > i) {
      std::string w = cleaned.substr(i, j - i);
      if (w != "a" && w != "an" && w != "the") tokens.push_back(std::move(w));
    }
    i = j;
  }
  return tokens;
}

double token_f1(std::string_view prediction, std::string_view gold) {
  const auto p = metric_tokens(prediction);
  const auto g = metric_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;

  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  // 2PR/(P+R) with P = common/|p| and R = common/|g|, in one rounding
  return 2.0 * common / static_cast<double>(p.size() + g.size());
}

double best_f1(std::string_view prediction, const std::vector<std::string>& golds) {
  if (golds.empty()) throw Error(ErrorKind::invalid_argument, "best_f1: no gold answers");
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, token_f1(prediction, g));
  return best;
}

double year_avg_f1(std::span<const ScoredAnswer> scored) {
  if (scored.empty()) throw Error(ErrorKind::invalid_argument, "year_avg_f1: no scored answers");
  const int year = scored.front().year;
  double sum = 0.0;
  for (const auto& s : scored) {
    if (s.year != year) {
      throw Error(ErrorKind::invalid_argument, "year_avg_f1: mixed years " + std::to_string(year) + " and " +
                                                   std::to_string(s.year));
    }
    sum += s.f1;
  }
  return sum / static_cast<double>(scored.size());
}

double f1_max(const ScoreTable& per_question, const YearRange& range) {
  if (per_question.empty()) throw Error(ErrorKind::invalid_argument, "f1_max: no questions");
  double sum = 0.0;
  for (const auto& [qid, by_year] : per_question) {
    double best = 0.0;
    for (int y = range.start; y <= range.end; ++y) {
      auto it = by_year.find(y);
      if (it == by_year.end()) {
        throw Error(ErrorKind::invalid_argument, "f1_max: question " + qid + " has no score for " + std::to_string(y));
      }
      best = std::max(best, it->second);
    }
    sum += best;
  }
  return sum / static_cast<double>(per_question.size());
}

std::string csv_escape(std::string_view field) {
  const bool quote = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!quote) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_scored_csv(std::ostream& out, std::span<const ScoredCsvRow> rows) {
  out << "question_id,year,style,layers,prediction,f1\n";
  for (const auto& r : rows) {
    out << csv_escape(r.answer.question_id) << ',' << r.answer.year << ',' << csv_escape(r.style) << ','
        << csv_escape(r.layers) << ',' << csv_escape(r.answer.prediction) << ',' << format_score(r.answer.f1)
        << '\n';
  }
}

}  // namespace tempsteer::evalkit
