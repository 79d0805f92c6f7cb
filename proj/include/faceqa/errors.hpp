#pragma once

#include <stdexcept>
#include <string>

namespace faceqa {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or input shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A profile, config or hyper-parameter combination is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered. `where()` names the offending parameter or input.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& where, const std::string& what)
      : Error(what + " [" + where + "]"), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Malformed or incomplete input data (manifests, ratings, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace faceqa
