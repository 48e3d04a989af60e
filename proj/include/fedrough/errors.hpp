#pragma once

#include <stdexcept>
#include <string>

namespace fedrough {

/// Violated precondition: mismatched dimensions, invalid configuration values.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss evaluation produced NaN/Inf.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, double offset)
      : std::runtime_error(what), offset_(offset) {}
  double offset() const noexcept { return offset_; }

 private:
  double offset_;
};

/// Local training produced non-finite parameters.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t client, std::size_t round)
      : std::runtime_error("training diverged: client " + std::to_string(client) +
                           " produced non-finite parameters in round " +
                           std::to_string(round)),
        client_(client),
        round_(round) {}
  std::size_t client() const noexcept { return client_; }
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t client_;
  std::size_t round_;
};

/// Malformed configuration file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace fedrough
