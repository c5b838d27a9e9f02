#pragma once

#include <stdexcept>
#include <string>

namespace hmme {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied argument violates a documented precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A value lies outside the domain of the model (e.g. token id >= m).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input data could not be ingested or is inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

// Configuration file or flag problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown (zero-likelihood data, non-finite values).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmme
