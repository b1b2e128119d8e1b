#pragma once

#include <stdexcept>
#include <string>

namespace mdm {

/// Bad user input: malformed spec strings, invalid parameters, inadmissible
/// boundary conditions. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A problem exceeds an engine's size guard.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A graph lacks the structure an engine requires (e.g. strip layout).
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic is undefined for the given sample (zero variance, too few points).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdm
