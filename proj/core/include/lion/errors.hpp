#pragma once

#include <stdexcept>
#include <string>

namespace lion {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (class label, tensor coordinate) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument violates a precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A fixed-point solve blew up or failed to reach its tolerance.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, double residual, int iterations)
      : NumericError(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Object state does not allow the requested operation (missing grads,
/// misaligned masks).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is unknown, malformed or out of range.
class ConfigError : public ArgumentError {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : ArgumentError("config key '" + key + "': " + what), key_(key) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// A file the operation depends on is absent or unreadable.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace lion
