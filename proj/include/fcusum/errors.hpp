#pragma once

#include <stdexcept>
#include <string>

namespace fcusum {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Curves or operators expressed in different bases were combined.
class IncompatibleBasis : public Error {
 public:
  using Error::Error;
};

/// Least-squares design matrix without full column rank.
class SingularFit : public Error {
 public:
  using Error::Error;
};

/// Input data violates a domain requirement (e.g. non-positive values under a log transform).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An approximation or iterative routine failed to deliver a result.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Argument to the tail approximation lies outside its region of validity.
class DomainError : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace fcusum
