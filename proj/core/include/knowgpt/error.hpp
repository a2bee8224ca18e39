#pragma once

#include <stdexcept>
#include <string>

namespace knowgpt {

// Base class for every failure raised by the library. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad magic, wrong field count, non-finite values...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration detected before any work was attempted.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Lookup of an entity, relation, or vocabulary row that does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (non-finite solve, NaN gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace knowgpt
