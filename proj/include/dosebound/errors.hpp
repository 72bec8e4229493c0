#pragma once

#include <stdexcept>
#include <string>

namespace dosebound {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller violated an interface contract (mismatched kinds, empty input, bad flags).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative method ran out of budget. Carries the best estimate reached.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double partial, double error_estimate = 0.0)
        : std::runtime_error(what), partial_(partial), error_estimate_(error_estimate) {}

    double partial() const noexcept { return partial_; }
    double error_estimate() const noexcept { return error_estimate_; }

private:
    double partial_;
    double error_estimate_;
};

/// The sensitivity model admits an unbounded interval at this violation factor.
class PartialIdentificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every weight in an extremization collapsed to zero.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dosebound
