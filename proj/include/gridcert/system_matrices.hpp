#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gridcert/network.hpp"
#include "gridcert/state.hpp"

namespace gridcert {

/// State-space assembly of the bilinear reformulation
///   xdot = A x - B F(C x)
/// around a declared equilibrium, with state x = [x1 x2 x3]:
/// generator angle deviations, generator velocities, load angle deviations.
struct SystemMatrices {
  Eigen::MatrixXd A;      // state x state
  Eigen::MatrixXd B;      // state x |E|
  Eigen::MatrixXd C;      // |E| x state, rows are angle-difference selectors
  Eigen::MatrixXd S;      // |E| x |E| diagonal of a_kj
  Eigen::MatrixXd E_inc;  // |E| x n incidence, +1 at lower id, -1 at higher
  Eigen::MatrixXd M;      // n x n diag(m_1..m_m, d_{m+1}..d_n)
  Eigen::MatrixXd M1;     // m x m inertia diagonal
  Eigen::MatrixXd D1;     // m x m generator damping diagonal
  std::vector<std::pair<int, int>> edge_order;  // bus id pairs, canonical order
  Eigen::VectorXd eq_angle_diffs;  // delta*_kj per edge

  int state_dim() const { return static_cast<int>(A.rows()); }
  int edge_count() const { return static_cast<int>(edge_order.size()); }

  /// Deviation coordinates of an absolute state.
  Eigen::VectorXd deviation(const PowerNetwork& net, const State& s,
                            const State& equilibrium) const;

  /// Direction of the uniform angle shift (all angles 1, velocities 0),
  /// the structural null mode of A and C.
  Eigen::VectorXd gauge_direction(const PowerNetwork& net) const;
};

constexpr double kEquilibriumTol = 1e-8;

/// Build all matrices of the bilinear form at a verified equilibrium.
/// Throws NumericalError when the equilibrium residual exceeds 1e-8.
SystemMatrices assemble_matrices(const PowerNetwork& net, const State& equilibrium);

/// Edge-wise nonlinearity F(Cx) = [sin(delta_kj) - sin(delta*_kj)].
Eigen::VectorXd nonlinearity(const SystemMatrices& mats, const Eigen::VectorXd& x);

/// Sector gain over the polytope |delta_kj| <= pi/2:
/// g = min over edges of (1 - sin|delta*_kj|) / (pi/2 - |delta*_kj|).
/// Requires every |delta*_kj| < pi/2.
double sector_gain(const Eigen::VectorXd& eq_angle_diffs);

/// Uniform-bound variant for an equilibrium known to satisfy
/// |delta*_kj| <= gamma: g = (1 - sin(gamma)) / (pi/2 - gamma).
double sector_gain_uniform(double gamma);

}  // namespace gridcert
