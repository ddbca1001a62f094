#pragma once

#include <stdexcept>
#include <string>

namespace bps {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Weight degeneracy, failed factorisations, non-finite values.
class NumericalError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace bps
