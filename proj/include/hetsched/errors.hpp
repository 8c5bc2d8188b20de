#pragma once

#include <stdexcept>
#include <string>

namespace hetsched {

/// A caller broke an operation's contract (e.g. a scheduler returned something
/// other than a permutation of the ready queue). Maps to exit code 2.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Invalid or inconsistent configuration. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hetsched
