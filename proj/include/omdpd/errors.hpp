#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace omdpd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions between tensors, policies and models.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented invariant (non-finite payoff, bad distribution, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operation is not defined for the configured cost mode.
class ModeError : public Error {
public:
    using Error::Error;
};

/// Constraint system has no feasible point.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// More episodes were ingested than the planned horizon K.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Iterative solver stopped at its iteration cap before reaching tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (residual " + format_residual(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    static std::string format_residual(double r) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", r);
        return buf;
    }

    double residual_;
};

} // namespace omdpd
