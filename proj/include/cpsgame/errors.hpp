#pragma once

#include <stdexcept>
#include <string>

namespace cpsgame {

/// Base class for every error raised by the core library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, unknown config keys, out-of-range probabilities.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A policy's state codec does not match the engine's observation binning.
class CodecMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Not enough data points for a fit or analysis.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// A quantity is undefined for the given inputs (division by zero slope, p = 0).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

}  // namespace cpsgame
