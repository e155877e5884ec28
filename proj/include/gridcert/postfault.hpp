#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gridcert/certifier.hpp"
#include "gridcert/faulton.hpp"
#include "gridcert/network.hpp"
#include "gridcert/powerflow.hpp"
#include "gridcert/state.hpp"
#include "gridcert/system_matrices.hpp"

namespace gridcert {

/// Box-constrained least-squares pick of post-fault susceptances: minimize
/// the power-flow mismatch at the desired angles over the admissible boxes.
/// The mismatch is affine in the susceptances, so the problem is a convex
/// quadratic; it is solved by projected gradient descent with exact line
/// search from the box midpoints. Variables the mismatch does not depend on
/// stay at their midpoint. Returns one value per adjustable line, in order.
Eigen::VectorXd select_susceptances(const PowerNetwork& net,
                                    const std::vector<AdjustableLine>& adjustable,
                                    const Eigen::VectorXd& target_angles);

struct AdaptOptions {
  double eps_p = 1e-4;
  int max_rounds = 20;
  double shrink = 0.75;  // pressure-level decay per round
  SolveOptions solve;
};

/// Certificate adapted toward containing a given fault-cleared state:
/// re-solves the stability LMI with trace(P) pinned and a shrinking cap on
/// x0'P x0 until V(x0) < V_min or the cap becomes infeasible. `contained`
/// is false when the rounds are exhausted (best candidate still returned).
struct AdaptResult {
  Certificate certificate;
  bool contained = false;
  int rounds = 0;
};

AdaptResult adapt_certificate(const PowerNetwork& net,
                              const SystemMatrices& mats,
                              const Eigen::VectorXd& x0_dev,
                              const AdaptOptions& opts = {});

/// Post-fault emergency plan: susceptances steering the network toward an
/// equilibrium near the fault-cleared angles, the equilibrium actually
/// reached, and a certificate adapted to contain the fault-cleared state.
struct PostFaultDesign {
  std::map<std::pair<int, int>, double> tuned;
  EquilibriumResult equilibrium;
  Certificate certificate;
  bool contained = false;
  int adapt_rounds = 0;
};

struct PostFaultOptions {
  AdaptOptions adapt;
  int powerflow_iterations = 50;
};

/// Full post-fault pipeline for a static fault-cleared state (velocities
/// must be zero): select susceptances, re-solve the equilibrium on the tuned
/// network, adapt the certificate, and report containment.
PostFaultDesign design_postfault(const PowerNetwork& net, const State& x0,
                                 const std::vector<AdjustableLine>& adjustable,
                                 const PostFaultOptions& opts = {});

/// Post-fault design file (JSON: tuned map keyed "from-to", contained flag,
/// adaptation rounds, the tuned equilibrium angles keyed by bus id). The
/// tuned map is compatible with the fault-on design reader, so the simulate
/// command accepts either file.
void save_postfault_design(const PostFaultDesign& design,
                           const PowerNetwork& net, const std::string& path);

/// State file round-trip (JSON: angles keyed by bus id, optional velocities
/// keyed by generator bus id; missing velocities default to zero).
State load_state(const std::string& path, const PowerNetwork& net);
void save_state(const State& s, const PowerNetwork& net, const std::string& path);

}  // namespace gridcert
