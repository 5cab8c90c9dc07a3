// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tempsteer/model.hpp"

namespace tempsteer::engine {

// Expected greedy completions exported by an independent implementation.
//
//   {"max_new": 8, "stop": ["<eos>"],
//    "cases": [{"id": "q0@1953", "prompt": "...", "expected_ids": [..], "expected": "..."}]}
//
// Prompts are encoded with a leading <bos>. "stop" defaults to <eos> when present.
struct GoldenCase {
  std::string id;
  std::string prompt;
  TokenIds expected_ids;
  std::string expected;
};

struct GoldenSet {
  int max_new = 8;
  std::vector<std::string> stop;
  bool has_stop = false;
  std::vector<GoldenCase> cases;
};

struct GoldenMismatch {
  std::string id;
  TokenIds expected_ids;
  TokenIds actual_ids;
};

struct GoldenReport {
  std::size_t total = 0;
  std::vector<GoldenMismatch> mismatches;
  bool ok() const { return mismatches.empty(); }
};

GoldenSet parse_goldens(std::string_view json_text);
GoldenSet load_goldens(const std::filesystem::path& path);
GoldenReport check_goldens(const ModelBundle& bundle, const GoldenSet& goldens);

}  // namespace tempsteer::engine
