#pragma once

#include <stdexcept>
#include <string>

namespace ou_statarb {

/// Argument outside the range where a routine is defined or trusted.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative evaluation (series, optimizer, fit) failed to converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Band ordering or admissibility violation (l < d < u, leverage, costs).
class BandError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Leverage so large that a stop-loss exit would wipe out the wealth.
class RuinError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or degenerate input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ou_statarb
