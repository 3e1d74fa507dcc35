#pragma once

#include <stdexcept>
#include <string>

namespace unlearn {

// Bad user-supplied configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or malformed external data (files, archives).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or diverged optimization, with context.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated an API precondition.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

}  // namespace unlearn
