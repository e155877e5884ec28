#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridcert/certifier.hpp"
#include "gridcert/network.hpp"
#include "gridcert/system_matrices.hpp"

namespace gridcert {

/// One line whose fault-on susceptance may be commanded within a box.
struct AdjustableLine {
  int from = 0;
  int to = 0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Which side of the bilinear product P~ * B(s) is held fixed while the
/// other is optimized. Solving both at once would be nonconvex.
enum class DesignMode { fixed_matrix, fixed_susceptance };

/// Emergency susceptance schedule for the fault-on phase plus the matrix
/// certifying the bounded-growth condition
///   N(P~, s) = [ X + mu^-1-scaled coupling ] <= 0  with  dV~/dt <= 1/mu.
struct FaultOnDesign {
  std::optional<std::pair<int, int>> tripped;
  std::map<std::pair<int, int>, double> tuned;  // susceptance per adjustable line
  double mu = 0.0;                              // clearing_time / V_min
  Eigen::MatrixXd P_tilde;
  DesignMode mode = DesignMode::fixed_matrix;
  double margin = 0.0;  // deflated feasibility margin at the solution
};

/// Assemble the fault-on growth LMI around the pre-fault equilibrium.
/// Exactly one of fixed_P / fixed_s must be given:
///  - fixed_P:   variables are the adjustable susceptances (box constrained);
///  - fixed_s:   variables are the upper triangle of P~, with P~ - P >= 0
///               appended so V~ dominates the pre-fault certificate.
/// Asking for both free is rejected (the product P~ B(s) is bilinear).
AffineLMI build_lmi9(const SystemMatrices& mats, const PowerNetwork& net,
                     const std::vector<AdjustableLine>& adjustable,
                     std::pair<int, int> tripped, double g, double mu,
                     const std::optional<Eigen::MatrixXd>& fixed_P,
                     const std::optional<Eigen::VectorXd>& fixed_s,
                     const Eigen::MatrixXd& dominated = Eigen::MatrixXd());

struct FaultOnOptions {
  DesignMode mode = DesignMode::fixed_matrix;
  int max_restarts = 5;     // certificate re-solves before giving up
  unsigned int seed = 0;    // restart perturbation stream
  SolveOptions solve;
  CertifyOptions certify;   // used when restarting with a fresh certificate
};

/// Find fault-on susceptances (or a dominating matrix P~) such that the
/// Lyapunov growth during the fault is bounded by 1/mu, guaranteeing the
/// fault-cleared state stays below V_min for the given clearing time.
/// Restarts re-solve the pre-fault certificate from perturbed starting
/// points when the first attempt is infeasible.
FaultOnDesign design_faulton(const PowerNetwork& net, const SystemMatrices& mats,
                             const Certificate& cert,
                             std::pair<int, int> tripped,
                             const std::vector<AdjustableLine>& adjustable,
                             double clearing_time,
                             const FaultOnOptions& opts = {});

/// Simulation cross-check of a design:
///  (a) discrete growth rate of V~ stays <= (1 + tol) / mu while the
///      trajectory remains in the polytope during the fault phase,
///  (b) V(x(clearing_time)) < V_min,
///  (c) the post-fault trajectory converges back to the equilibrium.
struct VerifyReport {
  bool growth_bound_ok = false;
  double max_growth_rate = 0.0;
  double growth_limit = 0.0;
  bool cleared_below_vmin = false;
  double value_at_clearing = 0.0;
  bool postfault_converged = false;

  bool ok() const {
    return growth_bound_ok && cleared_below_vmin && postfault_converged;
  }
};

VerifyReport verify_design(const FaultOnDesign& design, const PowerNetwork& net,
                           const Certificate& cert, const State& equilibrium,
                           double clearing_time, double t_end = 20.0,
                           double dt = 1e-3);

/// Design file round-trip (JSON: tripped pair or null, tuned map keyed
/// "from-to", mu, mode, margin, P~ rows).
void save_design(const FaultOnDesign& design, const std::string& path);
FaultOnDesign load_design(const std::string& path);

}  // namespace gridcert
