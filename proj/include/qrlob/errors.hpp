#pragma once

#include <stdexcept>
#include <string>

namespace qrlob {

// Malformed or inconsistent input data (bad CSV line, impossible event, ...).
// The CLI maps this family to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (non-convergence, degenerate sample, unstable model).
// The CLI maps this family to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qrlob
