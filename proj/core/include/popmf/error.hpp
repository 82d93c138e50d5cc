#pragma once

#include <stdexcept>
#include <string>

namespace popmf {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad parameters, malformed files, violated preconditions.
/// The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Failure discovered while running a simulation or integration
/// (policy row sums above one, non-finite derivatives, ...).
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace popmf
