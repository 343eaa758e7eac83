#pragma once

#include <stdexcept>
#include <string>

namespace wavebank {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or input value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (WAV, manifest, checkpoint, config).
class FormatError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Filesystem-level failure; message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numerical failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

// CTC label that cannot be aligned within the available frames.
// Deliberately distinct from NumericError.
class InfeasibleLabelError : public Error {
 public:
  using Error::Error;
};

}  // namespace wavebank
