#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace agrimuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (ranges, ratios, variants, keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: empty collections, out-of-range indices, unknown
/// sentences.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between tensors or parameter blocks.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf observed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Binary container decoding failure. `offset()` is the byte position at
/// which the reader gave up.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace agrimuse
