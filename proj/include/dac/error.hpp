#pragma once

#include <stdexcept>
#include <string>

namespace dac {

// Every error message is prefixed with the module that raised it so CLI
// diagnostics can be traced back without a stack.
class Error : public std::runtime_error {
public:
    Error(const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(module) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Invalid parameters or inconsistent inputs, detected before any computation.
class ConfigError : public Error {
    using Error::Error;
};

/// A design step (gain, filter, certificate) has no valid solution.
class DesignError : public Error {
    using Error::Error;
};

/// Runtime failure during integration (blow-up guard, non-finite state).
class SimulationError : public Error {
    using Error::Error;
};

}  // namespace dac
