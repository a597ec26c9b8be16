#pragma once

#include <stdexcept>
#include <string>

namespace hetrisk {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid input data (bad CSV, out-of-range values, bad configs).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (singular system, separation, no convergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The Newton system could not be solved; usually perfect or quasi-complete separation.
class SingularError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Bad command line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace hetrisk
