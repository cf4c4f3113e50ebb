#pragma once

#include <stdexcept>
#include <string>

namespace doptlab {

// Malformed inputs: bad dimensions, broken simplex rows, unreadable files.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A visited (t, s, a) has positive target probability but zero behavior
// probability, so the importance-weighted estimator is undefined there.
class CoverageViolation : public std::runtime_error {
 public:
  explicit CoverageViolation(const std::string& what) : std::runtime_error(what) {}
};

// The request is well-formed but too large to honor (e.g. enumeration cap).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace doptlab
