#include "gridcert/system_matrices.hpp"

#include <cmath>
#include <numbers>

#include "gridcert/powerflow.hpp"

namespace gridcert {

namespace {

// angle coordinate of bus position i in the [x1 x2 x3] layout
int angle_coord(int i, int m) { return i < m ? i : m + i; }

}  // namespace

Eigen::VectorXd SystemMatrices::deviation(const PowerNetwork& net, const State& s,
                                          const State& equilibrium) const {
  const int n = net.size();
  const int m = net.generator_count();
  Eigen::VectorXd x(n + m);
  x.segment(0, m) = s.angles.head(m) - equilibrium.angles.head(m);
  x.segment(m, m) = s.velocities;
  x.segment(2 * m, n - m) = s.angles.tail(n - m) - equilibrium.angles.tail(n - m);
  return x;
}

Eigen::VectorXd SystemMatrices::gauge_direction(const PowerNetwork& net) const {
  const int n = net.size();
  const int m = net.generator_count();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n + m);
  for (int i = 0; i < n; ++i) v[angle_coord(i, m)] = 1.0;
  return v;
}

SystemMatrices assemble_matrices(const PowerNetwork& net, const State& equilibrium) {
  const Eigen::VectorXd mismatch = residual(net, equilibrium.angles);
  const double res = mismatch.cwiseAbs().maxCoeff();
  if (res > kEquilibriumTol)
    throw NumericalError("assemble_matrices: equilibrium residual " +
                         std::to_string(res) + " exceeds 1e-8");

  const int n = net.size();
  const int m = net.generator_count();
  const int ne = net.line_count();
  const int dim = n + m;

  SystemMatrices out;
  out.M1 = Eigen::MatrixXd::Zero(m, m);
  out.D1 = Eigen::MatrixXd::Zero(m, m);
  out.M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses()[i];
    out.M(i, i) = (b.kind == BusKind::generator) ? b.inertia : b.damping;
    if (i < m) {
      out.M1(i, i) = b.inertia;
      out.D1(i, i) = b.damping;
    }
  }

  out.E_inc = Eigen::MatrixXd::Zero(ne, n);
  out.C = Eigen::MatrixXd::Zero(ne, dim);
  out.eq_angle_diffs.resize(ne);
  const Eigen::VectorXd a = net.coupling_coefficients();
  out.S = a.asDiagonal();
  for (int e = 0; e < ne; ++e) {
    const Line& ln = net.lines()[e];
    const int k = net.bus_index(ln.from);  // from < to, so +1 at lower id
    const int j = net.bus_index(ln.to);
    out.edge_order.emplace_back(ln.from, ln.to);
    out.E_inc(e, k) = 1.0;
    out.E_inc(e, j) = -1.0;
    out.C(e, angle_coord(k, m)) = 1.0;
    out.C(e, angle_coord(j, m)) = -1.0;
    out.eq_angle_diffs[e] = equilibrium.angles[k] - equilibrium.angles[j];
  }

  out.A = Eigen::MatrixXd::Zero(dim, dim);
  out.A.block(0, m, m, m).setIdentity();
  out.A.block(m, m, m, m) = -(out.M1.inverse() * out.D1);

  // B = [O; S1 M^-1 E^T S; S2 M^-1 E^T S]
  const Eigen::MatrixXd mets = out.M.inverse() * out.E_inc.transpose() * out.S;
  out.B = Eigen::MatrixXd::Zero(dim, ne);
  out.B.block(m, 0, m, ne) = mets.topRows(m);
  out.B.block(2 * m, 0, n - m, ne) = mets.bottomRows(n - m);

  return out;
}

Eigen::VectorXd nonlinearity(const SystemMatrices& mats, const Eigen::VectorXd& x) {
  const Eigen::VectorXd cx = mats.C * x;
  Eigen::VectorXd f(mats.edge_count());
  for (int e = 0; e < mats.edge_count(); ++e) {
    const double ds = mats.eq_angle_diffs[e];
    f[e] = std::sin(ds + cx[e]) - std::sin(ds);
  }
  return f;
}

double sector_gain_uniform(double gamma) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  if (!(gamma >= 0.0 && gamma < half_pi))
    throw InputError("sector_gain: gamma must lie in [0, pi/2)");
  return (1.0 - std::sin(gamma)) / (half_pi - gamma);
}

double sector_gain(const Eigen::VectorXd& eq_angle_diffs) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  double g = 1.0;
  for (int e = 0; e < eq_angle_diffs.size(); ++e) {
    const double d = std::abs(eq_angle_diffs[e]);
    if (!(d < half_pi))
      throw NumericalError("sector_gain: equilibrium outside the polytope, "
                           "|delta*_kj| >= pi/2");
    g = std::min(g, (1.0 - std::sin(d)) / (half_pi - d));
  }
  return g;
}

}  // namespace gridcert
