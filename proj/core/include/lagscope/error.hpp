#pragma once

#include <stdexcept>
#include <string>

namespace lagscope {

/// Raised for invalid input, violated preconditions and shape mismatches.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces a non-finite value (NaN loss, diverging
/// simulation). The CLI maps it to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lagscope
