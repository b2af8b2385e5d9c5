#pragma once

#include <stdexcept>
#include <string>

namespace wrl {

// Violation of a data contract (bad file, unresolved word, out-of-range
// value). The CLI maps this to exit code 2; usage errors exit with 1.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent run configuration (bad flag combination or value). Exit 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wrl
