#pragma once

#include <stdexcept>
#include <string>

namespace sslosr {

// Base class for all errors raised by the library.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values: shape mismatches, out-of-range labels, invalid configs.
class argument_error : public error {
 public:
  using error::error;
};

// Malformed input files: bad magic, truncation, unsupported dtype.
class format_error : public error {
 public:
  using error::error;
};

// Non-finite values produced where the math requires finite ones.
class numeric_error : public error {
 public:
  using error::error;
};

// Persisted state fails its checksum or does not match the requested shape.
class integrity_error : public error {
 public:
  using error::error;
};

// Filesystem failures.
class io_error : public error {
 public:
  using error::error;
};

}  // namespace sslosr
