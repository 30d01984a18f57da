#pragma once

#include <stdexcept>
#include <string>

namespace drsim {

// Base of every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NoGeneratorsInRegion : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InfeasibleModel : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double last_gap)
      : Error(what), last_gap_(last_gap) {}
  double last_gap() const { return last_gap_; }

 private:
  double last_gap_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace drsim
