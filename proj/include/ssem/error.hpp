#pragma once

#include <stdexcept>
#include <string>

namespace ssem {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data violating a domain invariant (non-finite values, missing truth, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Scene specification violating its invariants.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions that do not line up.
class DimError : public Error {
 public:
  using Error::Error;
};

/// Weight mass collapsed to zero during estimation.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Labels insufficient to initialize a model.
class InitError : public Error {
 public:
  using Error::Error;
};

/// Brute-force enumeration requested beyond its size cap.
class CapError : public Error {
 public:
  using Error::Error;
};

/// Metric requested over an empty or single-class pixel set.
class EmptyError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssem
