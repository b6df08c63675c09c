#pragma once

#include <stdexcept>
#include <string>

namespace qontot {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what the simulator can hold in memory.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, or an iterative method failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qontot
