// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <sstream>

#include "f1_oracle.hpp"
#include "tempsteer/error.hpp"
#include "tempsteer/evalkit.hpp"

using namespace tempsteer;
using namespace tempsteer::evalkit;

TEST_CASE("normalize_answer") {
  CHECK(normalize_answer("The Year 2022.") == "year 2022");
  CHECK(normalize_answer("Joe  Biden") == "joe biden");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("  An apple, a day!  ") == "apple day");
  CHECK(normalize_answer("theater") == "theater");
}

TEST_CASE("normalize_answer is idempotent") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto s = tstest::random_answer(rng);
    CHECK(normalize_answer(normalize_answer(s)) == normalize_answer(s));
  }
}

TEST_CASE("token_f1 examples") {
  CHECK(token_f1("joe biden", "joe biden") == 1.0);
  CHECK(token_f1("donald trump", "joe biden") == 0.0);
  CHECK(token_f1("the year 2022", "2022") == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1("", "") == 1.0);
  CHECK(token_f1("the", "") == 1.0);  // both normalize to empty
  CHECK(token_f1("x", "") == 0.0);
  CHECK(token_f1("", "x") == 0.0);
  // multiplicity counts once per gold occurrence
  CHECK(token_f1("joe joe", "joe") == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("token_f1 matches the brute-force oracle and is symmetric") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const auto a = tstest::random_answer(rng);
    const auto b = tstest::random_answer(rng);
    CHECK(token_f1(a, b) == tstest::oracle_f1(a, b));
    CHECK(token_f1(a, b) == token_f1(b, a));
    CHECK(token_f1(a, b) >= 0.0);
    CHECK(token_f1(a, b) <= 1.0);
  }
}

TEST_CASE("best_f1") {
  CHECK(best_f1("joe biden", {"donald trump", "joe biden"}) == 1.0);
  CHECK(best_f1("joe", {"joe biden"}) == token_f1("joe", "joe biden"));
  // "joe r biden" vs "joe biden" = 0.8, vs "biden" = 0.5
  CHECK(best_f1("joe r biden", {"biden", "joe biden"}) == doctest::Approx(0.8));
  CHECK_THROWS_AS(best_f1("x", {}), Error);
}

TEST_CASE("year_avg_f1") {
  std::vector<ScoredAnswer> all_one{{"q1", 1953, "a", 1.0}, {"q2", 1953, "b", 1.0}};
  CHECK(year_avg_f1(all_one) == 1.0);
  std::vector<ScoredAnswer> half{{"q1", 1953, "a", 1.0}, {"q2", 1953, "b", 0.0}};
  CHECK(year_avg_f1(half) == 0.5);
  CHECK_THROWS_AS(year_avg_f1(std::vector<ScoredAnswer>{}), Error);
  std::vector<ScoredAnswer> mixed{{"q1", 1953, "a", 1.0}, {"q2", 1954, "b", 0.0}};
  CHECK_THROWS_AS(year_avg_f1(mixed), Error);
}

TEST_CASE("f1_max") {
  const YearRange r(2000, 2002);
  CHECK(f1_max({{"q", {{2000, 0.0}, {2001, 1.0}, {2002, 0.2}}}}, r) == 1.0);
  CHECK(f1_max({{"q1", {{2000, 0.8}, {2001, 0.1}, {2002, 0.2}}}, {"q2", {{2000, 0.4}, {2001, 0.0}, {2002, 0.4}}}}, r) ==
        doctest::Approx(0.6));
  CHECK_THROWS_AS(f1_max({{"q", {{2000, 0.0}, {2002, 0.2}}}}, r), Error);
  CHECK(YearRange::hog().start == 1945);
  CHECK(YearRange::hog().end == 2020);
  CHECK(YearRange::taqa().start == 2000);
  CHECK(YearRange::taqa().end == 2023);
  CHECK_THROWS_AS(YearRange(2001, 2000), Error);
}

TEST_CASE("f1_max bounds year_avg_f1 from above") {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const YearRange r(1945, 1945 + static_cast<int>(rng() % 30));
    ScoreTable table;
    const auto nq = 1 + rng() % 10;
    for (std::size_t q = 0; q < nq; ++q) {
      for (int y : r.years()) table["q" + std::to_string(q)][y] = u(rng);
    }
    const int t = r.start + static_cast<int>(rng() % r.years().size());
    std::vector<ScoredAnswer> at_t;
    for (const auto& [qid, by_year] : table) at_t.push_back({qid, t, "", by_year.at(t)});
    CHECK(f1_max(table, r) >= year_avg_f1(at_t));
  }
}

TEST_CASE("scored CSV quoting") {
  std::ostringstream os;
  std::vector<ScoredCsvRow> rows{{"year_only", "L6", {"q1", 1953, "Smith, \"Jr\"", 0.5}}};
  write_scored_csv(os, rows);
  CHECK(os.str() == "question_id,year,style,layers,prediction,f1\nq1,1953,year_only,L6,\"Smith, \"\"Jr\"\"\",0.500000\n");
}
