#pragma once

#include <stdexcept>
#include <string>

namespace nmqsd {

/// Base of every error raised by the library. Carries the name of the module
/// that raised it so front ends can report "module: message".
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Bad input: dimensions, parameter ranges, config keys.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed: non-finite values, norm collapse,
/// non-convergence, trace drift.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace nmqsd
