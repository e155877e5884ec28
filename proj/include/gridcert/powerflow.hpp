#pragma once

#include <Eigen/Dense>
#include <optional>

#include "gridcert/network.hpp"

namespace gridcert {

struct EquilibriumResult {
  Eigen::VectorXd angles;  // n, canonical bus order; gauge: angles[0] pinned
  double residual = 0.0;   // max abs mismatch
  int iterations = 0;
  bool in_polytope = false;  // |delta*_kj| < pi/2 on all edges
};

/// Per-bus mismatch y_k = P_k - sum_j a_kj sin(delta_kj).
/// Sums to zero up to round-off for any angles.
Eigen::VectorXd residual(const PowerNetwork& net, const Eigen::VectorXd& angles);

/// Damped Newton solve of the power-flow-like equations. The all-ones null
/// vector of the Jacobian is deflated by pinning bus 1's angle to the initial
/// guess's first entry (default 0, flat start). Success means residual <= 1e-10;
/// only angle differences are contract-bearing.
EquilibriumResult solve_equilibrium(
    const PowerNetwork& net,
    const std::optional<Eigen::VectorXd>& initial_guess = std::nullopt,
    int max_iterations = 50);

}  // namespace gridcert
