#pragma once

#include <stdexcept>
#include <string>

namespace iwf {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument is outside the documented domain of an operation.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A power profile or power budget cannot satisfy the strategy-set constraints.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// An iterative numeric routine did not reach its tolerance.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A requested certificate (e.g. a weight vector) does not exist.
class CertificateError : public Error {
 public:
  using Error::Error;
};

// The brute-force equilibrium oracle could not certify a unique equilibrium.
class OracleError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked outside its contract (wrong schedule kind, etc).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input is supported in principle but not by this implementation.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Configuration documents: malformed input or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace iwf
