#pragma once

#include <stdexcept>
#include <string>

namespace qnndyn {

// Thrown when a computation goes numerically bad (NaN/Inf loss, diverging
// training, imaginary residue above tolerance). Maps to CLI exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an operation would exceed a configured memory/size cap.
// Maps to CLI exit code 4.
struct ResourceCapError : std::runtime_error {
    ResourceCapError(const std::string& msg, std::size_t cap_value)
        : std::runtime_error(msg + " (cap: " + std::to_string(cap_value) + ")"),
          cap(cap_value) {}
    std::size_t cap;
};

// Thrown for malformed or inconsistent run configuration. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace qnndyn
