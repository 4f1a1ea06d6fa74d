#pragma once

#include <stdexcept>
#include <string>

namespace echomap {

// Bad input: shapes, domains, config values, file contents. CLI exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or a diverged computation. CLI exit code 2.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace echomap
