#pragma once

#include <stdexcept>
#include <string>

namespace dpars {

// Every error carries the name of the module that raised it so the CLI can
// print "[module] message" and pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message);

  const std::string& module() const noexcept { return module_; }

  // Configuration and input-format problems map to exit code 2, everything
  // else (numerical failures, runtime faults) to exit code 1.
  virtual bool is_usage_error() const noexcept { return false; }

 private:
  std::string module_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  bool is_usage_error() const noexcept override { return true; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  bool is_usage_error() const noexcept override { return true; }
};

class InvalidSpecError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class AlignmentError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ProtocolError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpars
