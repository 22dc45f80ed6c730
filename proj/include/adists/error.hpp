#pragma once

#include <stdexcept>
#include <string>

namespace adists {

// Base of every error raised by the library. The subclasses map onto the
// CLI exit codes: usage -> 1, data -> 2, numeric -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace adists
