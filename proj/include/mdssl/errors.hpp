#pragma once

#include <stdexcept>
#include <string>

namespace mdssl {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: config values, spec fields, malformed files.
// The CLI maps these to exit code 2; everything else exits with 3.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class TooShortError : public Error {
 public:
  using Error::Error;
};

class InfeasibleBatchError : public Error {
 public:
  using Error::Error;
};

class InfeasibleAnchorError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdssl
