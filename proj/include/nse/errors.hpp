#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: shapes, manifests, hyperparameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A tensor file that does not conform to the on-disk format.
class FormatError : public ValidationError {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : ValidationError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Singular or ill-conditioned systems, failed decompositions.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace nse
