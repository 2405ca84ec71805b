#pragma once

#include <stdexcept>
#include <string>

namespace rowcol {

// Error families map to CLI exit codes: ConfigError -> 2, IoError -> 3,
// NumericError (and anything else) -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rowcol
