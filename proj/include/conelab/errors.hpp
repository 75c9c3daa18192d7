#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace conelab {

/// Argument outside the domain of an operation (k out of range, bad budget, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A point left the admissible cone. `inequality` names the defining
/// inequality that failed, e.g. "sigma_2 > 0".
class FeasibilityError : public std::runtime_error {
public:
    FeasibilityError(const std::string& what, std::string inequality, std::ptrdiff_t node = -1)
        : std::runtime_error(what), inequality_(std::move(inequality)), node_(node) {}

    const std::string& inequality() const noexcept { return inequality_; }
    /// Grid node where the violation happened, -1 when not tied to a grid.
    std::ptrdiff_t node() const noexcept { return node_; }

private:
    std::string inequality_;
    std::ptrdiff_t node_;
};

/// Invalid model parameters, e.g. (alpha, tau) outside the admissible range.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Random sampling produced no admissible point.
class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Grid too coarse for the requested stencil.
class ResolutionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Metric that is not positive definite.
class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nonlinear iteration failed to reach tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history = {})
        : std::runtime_error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// A monotone approximation scheme produced a non-monotone sequence.
class SchemeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Admissible-metric construction found no working exponent.
class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested quantity cannot be extracted from the data at hand.
class RateUnavailableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace conelab
