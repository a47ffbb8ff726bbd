#pragma once

#include <stdexcept>
#include <string>

namespace roar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor or image extents do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An API was used out of order (e.g. backward before forward).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A statistic is not defined on the given data (zero variance, one class, ...).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Disc localization could not find a bright enough region.
class NoDiscFound : public Error {
 public:
  using Error::Error;
};

/// Manifest or annotation rows failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration file or option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace roar
