#pragma once

#include <stdexcept>
#include <string>

namespace cgnsda {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed model definition (evaluator shape mismatch, bad dimensions).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Invalid parameter value (out of range, wrong parity, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Numerical failure at runtime: blow-up, divergence, non-finite state.
/// Carries the step index at which the failure was detected (-1 if n/a).
class NumericalError : public Error {
public:
    NumericalError(const std::string& msg, long step = -1)
        : Error(step >= 0 ? msg + " (step " + std::to_string(step) + ")" : msg),
          step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// Singular or severely ill-conditioned matrix where the theory requires
/// invertibility (observation Gramian, filter covariance, covariance ratio).
class ConditioningError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Configuration / IO problem (missing file, schema violation). Maps to
/// exit code 2 in the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace cgnsda
