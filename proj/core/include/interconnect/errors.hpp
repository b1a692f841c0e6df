#pragma once

#include <stdexcept>
#include <string>

namespace interconnect {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (names both shapes in the message).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Sequence too short for a convolution stack or adaptor.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Token id or table index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite value detected (debug mode) or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, Manifest, Version, Truncated, ShapeMismatch, MissingTensor };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind) noexcept;

}  // namespace interconnect
