#pragma once

#include <stdexcept>
#include <string>

namespace fpage {

// Base for every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented precondition or invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable or malformed file.
class IoError : public Error {
 public:
  using Error::Error;
};

// Lookup of an unknown key (subject, array name, ...).
class NotFound : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or an impossible probability encountered during computation.
class NumericalFault : public Error {
 public:
  using Error::Error;
};

}  // namespace fpage
