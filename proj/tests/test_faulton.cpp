#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "gridcert/certifier.hpp"
#include "gridcert/faulton.hpp"
#include "gridcert/network.hpp"
#include "gridcert/powerflow.hpp"
#include "gridcert/system_matrices.hpp"

using namespace gridcert;

namespace {

const std::string kCase3 = std::string(FIXTURE_DIR) + "/case3.json";
const std::string kStressed = std::string(FIXTURE_DIR) + "/case3_stressed.json";

State equilibrium_state(const PowerNetwork& net) {
  const EquilibriumResult eq = solve_equilibrium(net);
  return {eq.angles, Eigen::VectorXd::Zero(net.generator_count())};
}

// independent assembly of the fault-on growth block for given susceptances:
// scales B columns directly instead of going through the affine decomposition
Eigen::MatrixXd oracle_block(const SystemMatrices& mats, const PowerNetwork& net,
                             const std::vector<AdjustableLine>& adjustable,
                             const Eigen::VectorXd& s, int trip_e, double g,
                             double mu, const Eigen::MatrixXd& P) {
  Eigen::MatrixXd B = mats.B;
  for (size_t l = 0; l < adjustable.size(); ++l) {
    const int e = net.line_index(adjustable[l].from, adjustable[l].to);
    const double b = net.lines()[static_cast<size_t>(e)].susceptance;
    B.col(e) *= s[static_cast<Eigen::Index>(l)] / b;
  }
  const int d = mats.state_dim();
  const int ne = mats.edge_count();
  Eigen::MatrixXd Bbar(d, ne + 1);
  Bbar.leftCols(ne) = B;
  Bbar.col(ne) = std::sqrt(mu) * B.col(trip_e);
  const Eigen::MatrixXd Abar = mats.A - 0.5 * (1.0 + g) * B * mats.C;
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(d + ne + 1, d + ne + 1);
  N.topLeftCorner(d, d) =
      Abar.transpose() * P + P * Abar +
      std::pow(1.0 - g, 2) / 4.0 * mats.C.transpose() * mats.C;
  N.topRightCorner(d, ne + 1) = P * Bbar;
  N.bottomLeftCorner(ne + 1, d) = Bbar.transpose() * P;
  N.bottomRightCorner(ne + 1, ne + 1) =
      -Eigen::MatrixXd::Identity(ne + 1, ne + 1);
  return N;
}

std::vector<AdjustableLine> half_width_boxes(const PowerNetwork& net) {
  std::vector<AdjustableLine> out;
  for (const std::pair<int, int>& e :
       std::vector<std::pair<int, int>>{{1, 2}, {2, 3}}) {
    const double b =
        net.lines()[static_cast<size_t>(net.line_index(e.first, e.second))]
            .susceptance;
    out.push_back({e.first, e.second, 0.5 * b, 1.5 * b});
  }
  return out;
}

}  // namespace

TEST_CASE("exactly one side of the bilinear product must be fixed") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const auto adj = half_width_boxes(net);
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd s(2);
  s << 0.739, 1.245;
  CHECK_THROWS_AS(
      build_lmi9(mats, net, adj, {1, 3}, 0.55, 0.11, P, s), InputError);
  CHECK_THROWS_AS(build_lmi9(mats, net, adj, {1, 3}, 0.55, 0.11, std::nullopt,
                             std::nullopt),
                  InputError);
}

TEST_CASE("growth LMI is affine in the susceptances and matches the oracle") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const auto adj = half_width_boxes(net);
  const Certificate cert = certify(net, mats);
  const double mu = 0.1 / cert.v_min;
  const int trip_e = net.line_index(1, 3);
  const AffineLMI lmi =
      build_lmi9(mats, net, adj, {1, 3}, cert.g, mu, cert.P, std::nullopt);

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> dist(0.3, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd s(2);
    s << dist(rng), dist(rng);
    const Eigen::MatrixXd got = lmi.nsd.assemble(s);
    const Eigen::MatrixXd want =
        oracle_block(mats, net, adj, s, trip_e, cert.g, mu, cert.P);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("Schur complement: block form and Riccati form agree") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);
  const double g = cert.g;
  const double mu = 0.1 / cert.v_min;
  const int d = mats.state_dim();
  const int ne = mats.edge_count();
  const int trip_e = net.line_index(1, 3);

  Eigen::MatrixXd Bbar(d, ne + 1);
  Bbar.leftCols(ne) = mats.B;
  Bbar.col(ne) = std::sqrt(mu) * mats.B.col(trip_e);
  const Eigen::MatrixXd Abar = mats.A - 0.5 * (1.0 + g) * mats.B * mats.C;
  const Eigen::MatrixXd CtC =
      std::pow(1.0 - g, 2) / 4.0 * mats.C.transpose() * mats.C;

  std::mt19937 rng(29);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  int compared = 0;
  for (int trial = 0; trial < 200 && compared < 50; ++trial) {
    // mix of scaled certificates and random symmetric candidates
    Eigen::MatrixXd P;
    if (trial % 2 == 0) {
      Eigen::MatrixXd noise(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) noise(i, j) = noise(j, i) = dist(rng);
      P = cert.P * (0.5 + 0.5 * std::abs(dist(rng))) + 0.3 * noise;
    } else {
      Eigen::MatrixXd noise(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) noise(i, j) = noise(j, i) = dist(rng);
      P = noise;
    }
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(d + ne + 1, d + ne + 1);
    const Eigen::MatrixXd X = Abar.transpose() * P + P * Abar + CtC;
    block.topLeftCorner(d, d) = X;
    block.topRightCorner(d, ne + 1) = P * Bbar;
    block.bottomLeftCorner(ne + 1, d) = Bbar.transpose() * P;
    block.bottomRightCorner(ne + 1, ne + 1) =
        -Eigen::MatrixXd::Identity(ne + 1, ne + 1);
    const Eigen::MatrixXd riccati = X + P * Bbar * Bbar.transpose() * P;

    const double lam_block = eig_sym(block).values.maxCoeff();
    const double lam_riccati = eig_sym(riccati).values.maxCoeff();
    if (std::abs(lam_block) < 1e-9 || std::abs(lam_riccati) < 1e-9)
      continue;  // ambiguous at the boundary
    ++compared;
    CHECK((lam_block <= 0.0) == (lam_riccati <= 0.0));
  }
  CHECK(compared >= 50);
}

TEST_CASE("fixed-matrix design stays in the boxes and simulates clean") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);
  const auto adj = half_width_boxes(net);
  const FaultOnDesign design =
      design_faulton(net, mats, cert, {1, 3}, adj, 0.1);

  CHECK(design.mode == DesignMode::fixed_matrix);
  CHECK(design.margin > 0.0);
  CHECK(design.mu == doctest::Approx(0.1 / cert.v_min));
  REQUIRE(design.tuned.size() == 2);
  for (size_t l = 0; l < adj.size(); ++l) {
    const double v = design.tuned.at({adj[l].from, adj[l].to});
    CHECK(v >= adj[l].lower - 1e-12);
    CHECK(v <= adj[l].upper + 1e-12);
  }
  // proximity to the published optimum is solver-dependent; report only
  WARN(std::abs(design.tuned.at({1, 2}) - 0.7199) <= 0.1 * 0.7199);
  WARN(std::abs(design.tuned.at({2, 3}) - 1.2093) <= 0.1 * 1.2093);

  const VerifyReport rep = verify_design(design, net, cert, eq, 0.1);
  CHECK(rep.growth_bound_ok);
  CHECK(rep.max_growth_rate <= rep.growth_limit);
  CHECK(rep.cleared_below_vmin);
  CHECK(rep.value_at_clearing < cert.v_min);
  CHECK(rep.postfault_converged);
  CHECK(rep.ok());
}

TEST_CASE("fixed-susceptance design dominates the base certificate") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);
  FaultOnOptions opts;
  opts.mode = DesignMode::fixed_susceptance;
  const FaultOnDesign design =
      design_faulton(net, mats, cert, {1, 3}, half_width_boxes(net), 0.1, opts);

  CHECK(design.mode == DesignMode::fixed_susceptance);
  // susceptances untouched in this mode
  CHECK(design.tuned.at({1, 2}) == doctest::Approx(0.739));
  CHECK(design.tuned.at({2, 3}) == doctest::Approx(1.245));
  // P~ >= P
  const Eigen::MatrixXd diff = design.P_tilde - cert.P;
  CHECK(eig_sym(diff).values.minCoeff() >= -1e-8);
}

TEST_CASE("stressed network: untuned long fault violates the level bound") {
  const PowerNetwork net = load_network(kStressed);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);

  FaultOnDesign untuned;
  untuned.tripped = {{1, 3}};
  untuned.mu = 3.0 / cert.v_min;
  untuned.P_tilde = cert.P;
  const VerifyReport rep = verify_design(untuned, net, cert, eq, 3.0);
  CHECK(!rep.cleared_below_vmin);
  CHECK(rep.value_at_clearing > cert.v_min);
}

TEST_CASE("design input guards") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);
  const auto adj = half_width_boxes(net);
  CHECK_THROWS_AS(design_faulton(net, mats, cert, {1, 3}, adj, 0.0),
                  InputError);
  CHECK_THROWS_AS(design_faulton(net, mats, cert, {1, 3}, {}, 0.1),
                  InputError);
  CHECK_THROWS_AS(design_faulton(net, mats, cert, {4, 7}, adj, 0.1),
                  InputError);
}

TEST_CASE("design file round-trip is bitwise") {
  const PowerNetwork net = load_network(kCase3);
  const State eq = equilibrium_state(net);
  const SystemMatrices mats = assemble_matrices(net, eq);
  const Certificate cert = certify(net, mats);
  const FaultOnDesign design =
      design_faulton(net, mats, cert, {1, 3}, half_width_boxes(net), 0.1);

  const std::string path = "roundtrip_design.json";
  save_design(design, path);
  const FaultOnDesign back = load_design(path);
  CHECK(back.tripped == design.tripped);
  CHECK(back.tuned == design.tuned);
  CHECK(back.mu == design.mu);
  CHECK(back.mode == design.mode);
  CHECK(back.margin == design.margin);
  CHECK((back.P_tilde - design.P_tilde).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_design("no_such_design.json"), InputError);
}
