#pragma once

#include <stdexcept>
#include <string>

namespace fairasr {

// Invalid configuration or constraint violation. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. The message carries the file and line number.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted (e.g. non-finite loss). The message names the step.
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fairasr
