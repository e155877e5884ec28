#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gridcert/network.hpp"
#include "gridcert/powerflow.hpp"
#include "gridcert/simulator.hpp"
#include "gridcert/system_matrices.hpp"

using namespace gridcert;

namespace {

const std::string kCase3 = std::string(FIXTURE_DIR) + "/case3.json";

State equilibrium_state(const PowerNetwork& net) {
  const EquilibriumResult eq = solve_equilibrium(net);
  return {eq.angles, Eigen::VectorXd::Zero(net.generator_count())};
}

PowerNetwork random_net(std::mt19937& rng, int n, int gens) {
  std::uniform_real_distribution<double> positive(0.5, 2.0);
  std::uniform_real_distribution<double> angle(-0.3, 0.3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Bus> buses;
  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    Bus b;
    b.id = i + 1;
    b.kind = i < gens ? BusKind::generator : BusKind::load;
    b.voltage = positive(rng);
    b.damping = positive(rng);
    if (b.kind == BusKind::generator) b.inertia = positive(rng);
    buses.push_back(b);
    target[i] = angle(rng);
  }
  std::vector<Line> lines;
  for (int i = 1; i < n; ++i) {
    Line ln;
    ln.from = std::uniform_int_distribution<int>(1, i)(rng);
    ln.to = i + 1;
    ln.susceptance = positive(rng);
    lines.push_back(ln);
  }
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n; ++j) {
      bool present = false;
      for (const Line& ln : lines)
        if (ln.from == i && ln.to == j) present = true;
      if (!present && coin(rng) < 0.2) {
        Line ln;
        ln.from = i;
        ln.to = j;
        ln.susceptance = positive(rng);
        lines.push_back(ln);
      }
    }
  // derive injections so `target` (by id) is an exact equilibrium
  PowerNetwork proto(buses, lines);
  Eigen::VectorXd in_order(n);
  for (int i = 0; i < n; ++i) in_order[proto.bus_index(i + 1)] = target[i];
  const Eigen::VectorXd flows = -residual(proto, in_order);
  for (Bus& b : buses) b.injection = flows[proto.bus_index(b.id)];
  return PowerNetwork(buses, lines);
}

}  // namespace

TEST_CASE("matrix shapes and block structure on case3") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const int m = 3;
  CHECK(mats.state_dim() == 6);
  CHECK(mats.edge_count() == 3);
  // A = [[0 I 0],[0 -M1^-1 D1 0],[0 0 0]] (no loads here)
  CHECK((mats.A.topLeftCorner(m, m)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mats.A.topRightCorner(m, m) -
         Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mats.A(m, m) == doctest::Approx(-0.5));  // -d/m = -1/2
  // C rows select angle differences with +-1
  for (int e = 0; e < mats.edge_count(); ++e) {
    CHECK(mats.C.row(e).cwiseAbs().sum() == doctest::Approx(2.0));
    CHECK(mats.C.row(e).sum() == doctest::Approx(0.0));
  }
  CHECK(mats.eq_angle_diffs[0] == doctest::Approx(-0.15875).epsilon(1e-3));
}

TEST_CASE("assembly rejects states away from equilibrium") {
  const PowerNetwork net = load_network(kCase3);
  State bad = equilibrium_state(net);
  bad.angles[1] += 0.05;
  CHECK_THROWS_AS(assemble_matrices(net, bad), NumericalError);
}

TEST_CASE("bilinear form matches the physical dynamics pointwise") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 8)(rng);
    const int gens = std::uniform_int_distribution<int>(1, n - 1)(rng);
    const PowerNetwork net = random_net(rng, n, gens);
    const State eq = equilibrium_state(net);
    const SystemMatrices mats = assemble_matrices(net, eq);
    const int m = net.generator_count();

    State s;
    s.angles.resize(n);
    s.velocities.resize(m);
    for (int i = 0; i < n; ++i) s.angles[i] = eq.angles[i] + dist(rng);
    for (int i = 0; i < m; ++i) s.velocities[i] = dist(rng);

    const Eigen::VectorXd x = mats.deviation(net, s, eq);
    const Eigen::VectorXd xdot =
        mats.A * x - mats.B * nonlinearity(mats, x);
    const State d = rhs(net, s);
    Eigen::VectorXd expected(n + m);
    expected.head(m) = d.angles.head(m);      // x1' = generator angle rates
    expected.segment(m, m) = d.velocities;    // x2' = accelerations
    expected.tail(n - m) = d.angles.tail(n - m);
    CHECK((xdot - expected).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("gauge direction annihilates A and C") {
  std::mt19937 rng(5);
  const PowerNetwork net = random_net(rng, 6, 3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Eigen::VectorXd v = mats.gauge_direction(net);
  CHECK((mats.A * v).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((mats.C * v).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(v.cwiseAbs().sum() == doctest::Approx(net.size()));
}

TEST_CASE("sector gain: closed forms") {
  constexpr double pi = std::numbers::pi;
  // gamma = pi/10: the quotient form, not the misprint product form
  CHECK(sector_gain_uniform(pi / 10.0) ==
        doctest::Approx((1.0 - std::sin(pi / 10.0)) / (pi / 2.0 - pi / 10.0))
            .epsilon(1e-12));
  CHECK(sector_gain_uniform(0.0) == doctest::Approx(2.0 / pi).epsilon(1e-12));
  CHECK_THROWS_AS(sector_gain_uniform(pi / 2.0), InputError);
  CHECK_THROWS_AS(sector_gain_uniform(-0.1), InputError);

  Eigen::VectorXd diffs(3);
  diffs << -0.1588, -0.0993, 0.0594;
  double expected = 2.0;
  for (int e = 0; e < 3; ++e)
    expected = std::min(expected, (1.0 - std::sin(std::abs(diffs[e]))) /
                                      (pi / 2.0 - std::abs(diffs[e])));
  CHECK(sector_gain(diffs) == doctest::Approx(expected).epsilon(1e-12));

  Eigen::VectorXd outside(1);
  outside << pi / 2.0;
  CHECK_THROWS_AS(sector_gain(outside), NumericalError);
}

TEST_CASE("sector bound holds over the polytope (sampling)") {
  constexpr double pi = std::numbers::pi;
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> star(-pi / 2.0 + 1e-3, pi / 2.0 - 1e-3);
  std::uniform_real_distribution<double> in_poly(-pi / 2.0, pi / 2.0);
  int samples = 0;
  while (samples < 20000) {
    const double ds = star(rng);
    Eigen::VectorXd one(1);
    one << ds;
    const double g = sector_gain(one);
    const double d = in_poly(rng);
    if (std::abs(d - ds) < 1e-8) continue;
    ++samples;
    const double slope = (std::sin(d) - std::sin(ds)) / (d - ds);
    CHECK(slope >= g - 1e-12);
    CHECK(slope <= 1.0 + 1e-12);
  }
}

TEST_CASE("deviation round-trip") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  State s = eq;
  s.angles[2] += 0.1;
  s.velocities[0] = 0.2;
  const Eigen::VectorXd x = mats.deviation(net, s, eq);
  CHECK(x[2] == doctest::Approx(0.1));
  CHECK(x[3] == doctest::Approx(0.2));
  CHECK(x.cwiseAbs().sum() == doctest::Approx(0.3));
}
