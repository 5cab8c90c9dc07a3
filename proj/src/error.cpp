// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/error.hpp"

namespace tempsteer {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::missing_tensor: return "missing_tensor";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::vocab: return "vocab";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::out_of_range: return "out_of_range";
    case ErrorKind::prompt_too_short: return "prompt_too_short";
    case ErrorKind::dataset: return "dataset";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

}  // namespace tempsteer
