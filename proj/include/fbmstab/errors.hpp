#pragma once

#include <stdexcept>
#include <string>

namespace fbmstab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter violates its documented range or ordering constraint.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain of an operation (off-grid time, empty window, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// NaN/overflow or a quadrature that did not reach its tolerance.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, double residual = 0.0)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// An iterative method exhausted its iteration budget.
class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A computed quantity contradicts an identity that must hold analytically.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Sample path generation failed (embedding and Cholesky both rejected).
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Least-squares decay fit had too few usable nodes.
class FitError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace fbmstab
