#pragma once

#include <stdexcept>
#include <string>

namespace nibkit {

// Base class for every failure the library reports.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shape disagreement; the message carries the offending shapes.
class ShapeError : public Error {
  using Error::Error;
};

// Invalid argument value (non-positive sigma, probability out of range, ...).
class ValueError : public Error {
  using Error::Error;
};

// Filesystem-level failure (open/read/write).
class IoError : public Error {
  using Error::Error;
};

// Malformed file contents; the message carries the byte offset where parsing stopped.
class FormatError : public Error {
  using Error::Error;
};

// Checkpoint container problems, distinguished by kind.
class CheckpointError : public Error {
public:
  enum class Kind { BadMagic, Truncated, Inconsistent, Version };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

}  // namespace nibkit
