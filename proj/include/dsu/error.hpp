#pragma once

#include <stdexcept>
#include <string>

namespace dsu {

// Base for every error raised by the library. The CLI maps the subclasses
// onto process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument value or precondition violation (k > T, fraction out of range).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents, inconsistent shapes, bad records.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Singular systems, non-finite intermediate values, rank-0 data.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline int exit_code(const Error& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 2;  // ConfigError, ParameterError
}

}  // namespace dsu
