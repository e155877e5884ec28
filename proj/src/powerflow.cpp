#include "gridcert/powerflow.hpp"

#include <cmath>
#include <numbers>

namespace gridcert {

Eigen::VectorXd residual(const PowerNetwork& net, const Eigen::VectorXd& angles) {
  const int n = net.size();
  if (angles.size() != n) throw InputError("residual: angle vector has wrong size");
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r[i] = net.buses()[i].injection;
  const Eigen::VectorXd a = net.coupling_coefficients();
  for (int e = 0; e < net.line_count(); ++e) {
    const Line& ln = net.lines()[e];
    const int k = net.bus_index(ln.from);
    const int j = net.bus_index(ln.to);
    const double flow = a[e] * std::sin(angles[k] - angles[j]);
    r[k] -= flow;
    r[j] += flow;
  }
  return r;
}

EquilibriumResult solve_equilibrium(const PowerNetwork& net,
                                    const std::optional<Eigen::VectorXd>& initial_guess,
                                    int max_iterations) {
  const int n = net.size();
  Eigen::VectorXd angles = Eigen::VectorXd::Zero(n);
  if (initial_guess) {
    if (initial_guess->size() != n)
      throw InputError("solve_equilibrium: initial guess has wrong size");
    angles = *initial_guess;
  }
  const double pinned = angles[0];
  const Eigen::VectorXd a = net.coupling_coefficients();

  EquilibriumResult out;
  Eigen::VectorXd r = residual(net, angles);
  double rnorm = r.cwiseAbs().maxCoeff();
  int it = 0;
  for (; it < max_iterations && rnorm > 1e-12; ++it) {
    // Jacobian of the flow equations; gauge deflated by dropping bus 1's
    // row/column (its angle stays pinned)
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int e = 0; e < net.line_count(); ++e) {
      const Line& ln = net.lines()[e];
      const int k = net.bus_index(ln.from);
      const int j = net.bus_index(ln.to);
      const double c = a[e] * std::cos(angles[k] - angles[j]);
      J(k, k) += c;
      J(j, j) += c;
      J(k, j) -= c;
      J(j, k) -= c;
    }
    const Eigen::MatrixXd Jr = J.bottomRightCorner(n - 1, n - 1);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Jr);
    if (!lu.isInvertible()) {
      throw NumericalError(
          "solve_equilibrium: singular Jacobian (gauge-deflated rank " +
          std::to_string(lu.rank()) + " of " + std::to_string(n - 1) + ")");
    }
    const Eigen::VectorXd step = lu.solve(r.tail(n - 1));
    // halve the step until the residual norm decreases
    double scale = 1.0;
    Eigen::VectorXd trial = angles;
    for (int h = 0; h <= 20; ++h) {
      trial = angles;
      trial.tail(n - 1) += scale * step;
      const double tn = residual(net, trial).cwiseAbs().maxCoeff();
      if (tn < rnorm || h == 20) break;
      scale *= 0.5;
    }
    angles = trial;
    r = residual(net, angles);
    rnorm = r.cwiseAbs().maxCoeff();
  }
  if (rnorm > 1e-10)
    throw NumericalError("solve_equilibrium: Newton did not converge after " +
                         std::to_string(max_iterations) +
                         " iterations (residual " + std::to_string(rnorm) + ")");

  angles[0] = pinned;  // untouched by the deflated update; kept explicit
  out.angles = angles;
  out.residual = rnorm;
  out.iterations = it;
  out.in_polytope = true;
  constexpr double half_pi = std::numbers::pi / 2.0;
  for (const Line& ln : net.lines()) {
    const double d = angles[net.bus_index(ln.from)] - angles[net.bus_index(ln.to)];
    if (std::abs(d) >= half_pi) out.in_polytope = false;
  }
  return out;
}

}  // namespace gridcert
