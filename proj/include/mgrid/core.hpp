#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mgrid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Violated structural invariant in a topology, parameter set, or state.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver failure; carries the last residual norm seen.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& msg, double residual)
        : std::runtime_error(msg), last_residual(residual) {}
    double last_residual;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace mgrid
