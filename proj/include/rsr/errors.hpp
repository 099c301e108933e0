#pragma once

#include <stdexcept>
#include <string>

namespace rsr {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejected input: dimension mismatch, out-of-range index, bad parameter.
class InvalidInput : public Error {
  using Error::Error;
};

// A row selection lost column rank. Carries the offending singular value so
// the caller can decide to fall back to a constrained solve.
class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& msg, double sigma)
      : Error(msg), sigma_min(sigma) {}
  double sigma_min;
};

// An iterative routine failed to converge.
class NumericError : public Error {
  using Error::Error;
};

// No feasible solution exists within the requested search space.
class Infeasible : public Error {
  using Error::Error;
};

// A brute-force enumeration would exceed its combinatorial guard.
class BudgetExceeded : public Error {
  using Error::Error;
};

// Malformed configuration or data file.
class ConfigError : public Error {
  using Error::Error;
};

}  // namespace rsr
