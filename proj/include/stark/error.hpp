#pragma once

#include <stdexcept>
#include <string>

namespace stark {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// An iterative procedure (eigensolver, step control, optimizer) gave up.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

/// Malformed or incompatible file contents.
class FormatError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string &message) {
  if (!condition)
    throw InvalidArgument(message);
}

} // namespace detail
} // namespace stark
