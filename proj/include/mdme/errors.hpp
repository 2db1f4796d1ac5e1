#pragma once

#include <stdexcept>
#include <string>

namespace mdme {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value, preset, or mismatched setup.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message carries row/column context.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or numerically degenerate input.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Index outside the valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdme
