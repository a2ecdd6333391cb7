#pragma once

#include <stdexcept>
#include <string>

namespace scl {

/// Raised when an argument violates an operation's precondition or a type
/// invariant (bad threshold, negative lambda, malformed manifest, ...).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Two rasters that must share dimensions do not.
class IncompatibleRaster : public ValidationError {
 public:
  explicit IncompatibleRaster(const std::string& what) : ValidationError(what) {}
};

/// File missing, unreadable, or not in the expected format.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace scl
