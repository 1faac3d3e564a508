#pragma once

#include <stdexcept>
#include <string>

namespace no2 {

/// Malformed or inconsistent input data (files, config, CLI arguments).
/// Maps to process exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (rank deficiency, non-convergence, non-finite
/// likelihood). Maps to process exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace no2
