#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operands live on different grids, ensembles or have incompatible widths.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A scalar or shape argument is outside its admissible range
/// (non-positive radius, empty ensemble, non-positive price, ...).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

class RangeError : public Error {
public:
  using Error::Error;
};

class SingularRegression : public Error {
public:
  using Error::Error;
};

class DegenerateStep : public Error {
public:
  using Error::Error;
};

class SingularVolatility : public Error {
public:
  using Error::Error;
};

class InvalidFamily : public Error {
public:
  using Error::Error;
};

class InconsistencyError : public Error {
public:
  using Error::Error;
};

/// Raised when an iterative procedure exhausts its budget. The residual trace
/// recorded up to that point travels with the exception.
class NonConvergence : public Error {
public:
  NonConvergence(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

private:
  std::vector<double> trace_;
};

class ResolventError : public Error {
public:
  ResolventError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

class StallError : public Error {
public:
  StallError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

private:
  std::vector<double> trace_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace bsde
