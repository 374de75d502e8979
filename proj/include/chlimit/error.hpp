#pragma once

#include <stdexcept>
#include <string>

namespace chlimit {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric parameter is outside its admissible range (lambda <= 0, eps > 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with an argument that violates its stated precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Problem data are inconsistent (flux compatibility, values outside the graph domain).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A nonlinear or linear solve failed.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double last_residual = 0.0)
      : Error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Internal invariant broken; indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unknown configuration entry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace chlimit
