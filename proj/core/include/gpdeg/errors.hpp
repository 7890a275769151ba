#pragma once

#include <stdexcept>
#include <string>

namespace gpdeg {

/// Base class for errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or model specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Initialization or sampling could not proceed.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// A parameter vector or draw set does not match the expected layout.
class StructuralError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpdeg
