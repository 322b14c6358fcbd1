#pragma once

#include <stdexcept>
#include <string>

namespace leaffed {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Precondition violated on caller-supplied values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced or consumed where finiteness is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace leaffed
