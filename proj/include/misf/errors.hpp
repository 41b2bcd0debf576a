#pragma once

#include <stdexcept>
#include <string>

namespace misf {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition or API misuse (shape mismatch, double backward, ...).
struct ContractError : Error {
    using Error::Error;
};

// NaN/Inf appeared where the contract requires finite values.
struct NumericError : Error {
    using Error::Error;
};

// File and format problems.
struct IoError : Error {
    using Error::Error;
};

// Bad run configuration (unknown key, unparsable value).
struct ConfigError : Error {
    using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

}  // namespace misf
