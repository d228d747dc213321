#pragma once

#include <stdexcept>
#include <string>

namespace walshqf {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dyadic exponent left the configured range; the universe is too large.
class ExponentOverflow : public Error {
 public:
  using Error::Error;
};

/// A rectangle or function does not fit the configured tile universe.
class OutsideUniverse : public Error {
 public:
  using Error::Error;
};

/// A step function is too coarse for the wave packet it is paired with.
class ResolutionMismatch : public Error {
 public:
  using Error::Error;
};

/// Caller supplied input that violates an operation's precondition.
class PreconditionFailed : public Error {
 public:
  using Error::Error;
};

/// A hard postcondition failed. This always indicates a bug.
class InvariantViolated : public Error {
 public:
  using Error::Error;
};

}  // namespace walshqf
