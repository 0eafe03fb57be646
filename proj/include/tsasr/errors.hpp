#pragma once

#include <stdexcept>
#include <string>

namespace tsasr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A configuration record holds an invalid or inconsistent value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input exceeds a fixed model capacity (source frames, target positions).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but degenerate for the operation (e.g. zero power).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsasr
