#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gridcert/network.hpp"
#include "gridcert/powerflow.hpp"

using namespace gridcert;

namespace {

const std::string kCase3 = std::string(FIXTURE_DIR) + "/case3.json";

// random connected net (spanning tree + extra edges) with injections derived
// from target angles, so the target is an exact equilibrium by construction
struct SyntheticCase {
  PowerNetwork net;
  Eigen::VectorXd target_angles;
};

SyntheticCase random_case(std::mt19937& rng, int n, int gens) {
  std::uniform_real_distribution<double> angle(-0.4, 0.4);
  std::uniform_real_distribution<double> positive(0.5, 2.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<Bus> buses;
  for (int i = 0; i < n; ++i) {
    Bus b;
    b.id = i + 1;
    b.kind = i < gens ? BusKind::generator : BusKind::load;
    b.voltage = positive(rng);
    b.damping = positive(rng);
    if (b.kind == BusKind::generator) b.inertia = positive(rng);
    buses.push_back(b);
  }
  std::vector<Line> lines;
  auto add_line = [&](int i, int j) {
    Line ln;
    ln.from = std::min(i, j) + 1;
    ln.to = std::max(i, j) + 1;
    ln.susceptance = positive(rng);
    lines.push_back(ln);
  };
  for (int i = 1; i < n; ++i)
    add_line(i, std::uniform_int_distribution<int>(0, i - 1)(rng));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      bool present = false;
      for (const Line& ln : lines)
        if (ln.from == i + 1 && ln.to == j + 1) present = true;
      if (!present && coin(rng) < 0.25) add_line(i, j);
    }

  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) target[i] = angle(rng);

  // back out the injections that make `target` an exact equilibrium
  PowerNetwork proto(buses, lines);  // balanced at zero injections
  Eigen::VectorXd flows = -residual(proto, [&] {
    Eigen::VectorXd in_order(n);
    for (int i = 0; i < n; ++i)
      in_order[proto.bus_index(i + 1)] = target[i];
    return in_order;
  }());
  for (Bus& b : buses) b.injection = flows[proto.bus_index(b.id)];

  Eigen::VectorXd canonical(n);
  PowerNetwork net(buses, lines);
  for (int i = 0; i < n; ++i) canonical[net.bus_index(i + 1)] = target[i];
  return {std::move(net), std::move(canonical)};
}

}  // namespace

TEST_CASE("case3 equilibrium reproduces the known angle differences") {
  const PowerNetwork net = load_network(kCase3);
  const EquilibriumResult eq = solve_equilibrium(net);
  CHECK(eq.residual <= 1e-10);
  CHECK(eq.in_polytope);
  const double d12 = eq.angles[0] - eq.angles[1];
  const double d13 = eq.angles[0] - eq.angles[2];
  const double d23 = eq.angles[1] - eq.angles[2];
  CHECK(std::abs(d12 - (-0.1588)) <= 2e-3);
  CHECK(std::abs(d13 - (-0.0994)) <= 2e-3);
  CHECK(std::abs(d23 - 0.0594) <= 2e-3);
}

TEST_CASE("zero injections give zero differences") {
  const std::string text = R"({"buses": [
    {"id": 1, "kind": "generator", "voltage": 1.1, "inertia": 1.0, "damping": 1.0, "injection": 0.0},
    {"id": 2, "kind": "generator", "voltage": 0.9, "inertia": 1.0, "damping": 1.0, "injection": 0.0},
    {"id": 3, "kind": "load", "voltage": 1.0, "damping": 1.0, "injection": 0.0}],
  "lines": [{"from": 1, "to": 2, "susceptance": 1.0},
            {"from": 2, "to": 3, "susceptance": 2.0}]})";
  const PowerNetwork net = parse_network(text);
  const EquilibriumResult eq = solve_equilibrium(net);
  CHECK((eq.angles.maxCoeff() - eq.angles.minCoeff()) <= 1e-12);
}

TEST_CASE("residual is gauge invariant and sums to zero") {
  const PowerNetwork net = load_network(kCase3);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd angles(net.size());
    for (int i = 0; i < net.size(); ++i) angles[i] = dist(rng);
    const double shift = dist(rng) * 10.0;
    const Eigen::VectorXd r0 = residual(net, angles);
    const Eigen::VectorXd r1 = residual(
        net, angles + Eigen::VectorXd::Constant(net.size(), shift));
    CHECK((r0 - r1).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(r0.sum()) <= 1e-12);
  }
}

TEST_CASE("random nets with loads: solver recovers constructed equilibria") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 8)(rng);
    const int gens = std::uniform_int_distribution<int>(1, n - 1)(rng);
    const SyntheticCase sc = random_case(rng, n, gens);
    const EquilibriumResult eq = solve_equilibrium(sc.net);
    CHECK(eq.residual <= 1e-10);
    // compare angle differences (the gauge is arbitrary)
    for (const Line& ln : sc.net.lines()) {
      const int i = sc.net.bus_index(ln.from);
      const int j = sc.net.bus_index(ln.to);
      const double got = eq.angles[i] - eq.angles[j];
      const double want = sc.target_angles[i] - sc.target_angles[j];
      CHECK(std::abs(got - want) <= 1e-8);
    }
  }
}

TEST_CASE("initial guess is honored and pins the gauge") {
  const PowerNetwork net = load_network(kCase3);
  Eigen::VectorXd guess = Eigen::VectorXd::Constant(net.size(), 0.7);
  const EquilibriumResult eq = solve_equilibrium(net, guess);
  CHECK(eq.angles[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(eq.residual <= 1e-10);
}

TEST_CASE("transfer beyond line capacity fails with a numerical error") {
  // |P| larger than max possible flow a_12 on the single line
  const std::string text = R"({"buses": [
    {"id": 1, "kind": "generator", "voltage": 1.0, "inertia": 1.0, "damping": 1.0, "injection": 2.0},
    {"id": 2, "kind": "generator", "voltage": 1.0, "inertia": 1.0, "damping": 1.0, "injection": -2.0}],
  "lines": [{"from": 1, "to": 2, "susceptance": 1.0}]})";
  const PowerNetwork net = parse_network(text);
  CHECK_THROWS_AS(solve_equilibrium(net), NumericalError);
}
