#pragma once

#include <stdexcept>
#include <string>

namespace argb {

/// Bad configuration (unknown key, invalid value). CLI exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

/// Runtime or numerical failure (non-finite loss, divergence). Exit code 2.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};

/// Missing or empty input (file, directory, checkpoint). Exit code 3.
struct MissingInputError : std::runtime_error {
  explicit MissingInputError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace argb
