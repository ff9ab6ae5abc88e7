#pragma once

#include <stdexcept>
#include <string>

namespace cabp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or an invalid layer/model specification.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file, bad magic number, or truncated record.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or an undefined numerical result.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Violation of an internal contract (ledger underflow, recording during backward, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cabp
