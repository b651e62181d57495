#pragma once

#include <stdexcept>
#include <string>

namespace pmlab {

/// Argument outside the mathematical domain of an operation (x outside [0,1],
/// alpha outside (0,1), alpha*p >= 1, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Two grid objects that must share a partition do not.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A discretization broke down (density floor breached, fit window empty, ...).
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pmlab
