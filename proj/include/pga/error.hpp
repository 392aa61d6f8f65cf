#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pga {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (shape mismatch, bad parameter).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A function or gradient evaluation produced a non-finite value.
class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what, std::vector<double> iterate = {})
      : Error(what), iterate_(std::move(iterate)) {}

  const std::vector<double>& iterate() const noexcept { return iterate_; }

 private:
  std::vector<double> iterate_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataFormatError : public Error {
 public:
  using Error::Error;
};

/// Pipe history too short for the cumulative mass to reach the pipe volume.
class InsufficientHistory : public Error {
 public:
  using Error::Error;
};

class InvalidTemperature : public Error {
 public:
  using Error::Error;
};

/// Rejection sampler could not find a feasible initial solution.
class InfeasibleSampler : public Error {
 public:
  using Error::Error;
};

}  // namespace pga
