// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tempsteer {

enum class ErrorKind {
  io,
  format,
  missing_tensor,
  shape_mismatch,
  vocab,
  invalid_argument,
  out_of_range,
  prompt_too_short,
  dataset,
  config,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a stable kind so the CLI can
// report it as machine-readable JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tempsteer
