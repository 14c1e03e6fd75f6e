#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace staytime {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that cannot be combined.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A record or dataset that breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid generator / experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system failures (unreadable, unwritable, missing columns).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary payload. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Requested operation that the chosen model kind does not define.
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace staytime
