#pragma once

#include <stdexcept>
#include <string>

namespace emcad {

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up for the requested operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

// A parameter container or decoder configuration is internally inconsistent.
class ConfigError : public Error {
public:
  using Error::Error;
};

// A serialized file (tensor, bundle, config) is malformed or unreadable.
class FormatError : public Error {
public:
  using Error::Error;
};

} // namespace emcad
