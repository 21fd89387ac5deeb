#pragma once

#include <stdexcept>
#include <string>

namespace fbopt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SeedingError : public Error {
 public:
  using Error::Error;
};

class DegenerateBoundaryError : public Error {
 public:
  using Error::Error;
};

/// Raised when a step transformation loses orientation (det of the map <= 0).
class FoldOverError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class StencilError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (relative residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class LineSearchError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fbopt
