#pragma once

#include <stdexcept>
#include <string>

namespace hosfl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree; always a caller bug.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf surfaced during a forward/backward pass or an aggregation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A round was driven in a state the protocol forbids (e.g. a stale client in S_t).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A client fell behind further than the server history reaches.
class StalenessError : public Error {
 public:
  using Error::Error;
};

/// Configuration text could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hosfl
