#pragma once

#include <stdexcept>
#include <string>

namespace hjh {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, unknown family tags, schema problems.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Newton or linear solver failure. Carries the last residual max-norm.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// A point or gradient fell outside a tabulated or covered region.
class CoverageError : public Error {
public:
    using Error::Error;
};

/// Initial data violates the non-degeneracy requirement on the drift.
class AdmissibilityError : public Error {
public:
    using Error::Error;
};

}  // namespace hjh
