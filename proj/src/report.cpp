// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tempsteer/error.hpp"
#include "tempsteer/sweep.hpp"

namespace tempsteer::sweep {

using nlohmann::ordered_json;

namespace {

std::string format_ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Scores go through the same fixed-precision text as the CSV so both files agree.
double rounded(double v) { return std::stod(evalkit::format_score(v)); }

ordered_json row_json(const SweepRow& r, bool with_scores) {
  ordered_json j = {{"mode", r.mode},
                    {"style", r.style},
                    {"layers", r.layers},
                    {"year", r.year},
                    {"avg_f1", rounded(r.avg_f1)},
                    {"f1_max", rounded(r.f1_max)},
                    {"n_questions", r.n_questions},
                    {"n_failed", r.n_failed},
                    {"mean_wall_ms", std::stod(format_ms(r.mean_wall_ms))}};
  if (with_scores) {
    ordered_json scores = ordered_json::array();
    for (const auto& s : r.scores) {
      scores.push_back({{"question_id", s.question_id}, {"prediction", s.prediction}, {"f1", rounded(s.f1)}});
    }
    j["scores"] = std::move(scores);
  }
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace

std::string rows_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "mode,style,layers,year,avg_f1,f1_max,n_questions,mean_wall_ms\n";
  for (const auto& r : rows) {
    os << evalkit::csv_escape(r.mode) << ',' << evalkit::csv_escape(r.style) << ',' << evalkit::csv_escape(r.layers)
       << ',' << r.year << ',' << evalkit::format_score(r.avg_f1) << ',' << evalkit::format_score(r.f1_max) << ','
       << r.n_questions << ',' << format_ms(r.mean_wall_ms) << '\n';
  }
  return os.str();
}

std::string scores_csv(std::span<const SweepRow> rows) {
  std::vector<evalkit::ScoredCsvRow> flat;
  for (const auto& r : rows) {
    for (const auto& s : r.scores) flat.push_back({r.style, r.layers, s});
  }
  std::ostringstream os;
  evalkit::write_scored_csv(os, flat);
  return os.str();
}

std::string report_json(std::span<const SweepRow> rows, const std::vector<VectorBuild>& builds) {
  ordered_json j;
  ordered_json all = ordered_json::array();
  for (const auto& r : rows) all.push_back(row_json(r, true));
  ordered_json summary = ordered_json::array();
  for (const auto& r : best_rows(rows)) summary.push_back(row_json(r, false));
  ordered_json vb = ordered_json::array();
  for (const auto& b : builds) {
    vb.push_back({{"style", b.style}, {"year", b.year}, {"kind", b.kind}, {"layers", b.layers},
                  {"wall_ms", std::stod(format_ms(b.wall_ms))}});
  }
  j["rows"] = std::move(all);
  j["summary"] = std::move(summary);
  j["vector_builds"] = std::move(vb);
  return j.dump(2) + "\n";
}

void emit_report(std::span<const SweepRow> rows, const std::filesystem::path& dir,
                 const std::vector<VectorBuild>& builds) {
  if (rows.empty()) throw Error(ErrorKind::invalid_argument, "emit_report: no rows");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::io, "cannot create report directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
  write_file(dir / "rows.csv", rows_csv(rows));
  write_file(dir / "scores.csv", scores_csv(rows));
  write_file(dir / "report.json", report_json(rows, builds));
}

}  // namespace tempsteer::sweep
