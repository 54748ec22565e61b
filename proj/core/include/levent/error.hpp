#pragma once

#include <stdexcept>
#include <string>

namespace levent {

/// Bad user input: parameter out of range, malformed file, inconsistent options.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnstableDrift : public NumericalError {
 public:
  explicit UnstableDrift(const std::string& what)
      : NumericalError("unstable drift: " + what) {}
};

class SingularMatrix : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace levent
