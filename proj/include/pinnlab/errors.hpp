#pragma once

#include <stdexcept>
#include <string>

namespace pinnlab {

/// Bad run configuration (unknown names, invalid sizes, malformed files).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (detached scalars, wrong set size, foreign points).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite values or diverging numerics; carries the failing site.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pinnlab
