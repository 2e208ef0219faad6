#pragma once

#include <stdexcept>
#include <string>

namespace gdformer {

// Invalid configuration or usage; the CLI maps this family to exit code 1.
// Everything else thrown by the library is a runtime failure (exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gdformer
