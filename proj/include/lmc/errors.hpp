#pragma once

#include <stdexcept>
#include <string>

namespace lmc {

/// Invalid configuration or input schema (CLI exit code 1).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated call contract: bad preconditions, mismatched layouts.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Non-finite values or failed numeric procedure.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure (CLI exit code 2).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lmc
