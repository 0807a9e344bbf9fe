#pragma once

#include <stdexcept>
#include <string>

namespace hgp {

// Bad model/kernel/run configuration (dimension mismatches, unknown options).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data (CSV rows, masks, degenerate series).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Linear-algebra or optimization failure that survived the retry policy.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hgp
