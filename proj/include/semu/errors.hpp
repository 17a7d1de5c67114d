#pragma once

#include <stdexcept>
#include <string>

namespace semu {

// Error taxonomy mirrors the CLI exit codes: config/validation problems,
// I/O failures, and numerical failures are distinct classes.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace semu
