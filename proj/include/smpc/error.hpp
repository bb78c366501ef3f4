#pragma once

#include <stdexcept>
#include <string>

namespace smpc {

// Base for all engine errors so callers can catch the whole family.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/party/order-tag violations of an operation's contract.
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Value outside the fixed-point representable range.
struct RangeError : Error {
  explicit RangeError(const std::string& msg) : Error(msg) {}
};

// Parties disagreed on round or phase label at an exchange point. Fatal.
struct DesyncError : Error {
  explicit DesyncError(const std::string& msg) : Error(msg) {}
};

// A dealer artifact id was consumed twice (triple reuse, stale shuffle masks).
struct FreshnessError : Error {
  explicit FreshnessError(const std::string& msg) : Error(msg) {}
};

// Dealer budget exceeded: no fresh material of the requested kind.
struct DealerExhaustedError : Error {
  explicit DealerExhaustedError(const std::string& msg) : Error(msg) {}
};

// Scenario / cost-model / weights file problems.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace smpc
