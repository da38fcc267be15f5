#pragma once

#include <stdexcept>
#include <string>

namespace pprobe {

// Base of every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (bad vocabulary line, BATS parse failure, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Artifacts built from different vocabularies or universes.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

// A quantity that is mathematically undefined for the given input
// (empty vocabulary, pair never observed, zero-norm query, ...).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

}  // namespace pprobe
