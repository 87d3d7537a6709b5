#pragma once

#include <stdexcept>
#include <string>

namespace irpo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A RankedExample or Policy invariant does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; the message carries the 1-based line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A loss or gradient produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace irpo
