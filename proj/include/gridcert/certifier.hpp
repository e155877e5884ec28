#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "gridcert/lmi.hpp"
#include "gridcert/network.hpp"
#include "gridcert/system_matrices.hpp"

namespace gridcert {

/// Quadratic transient-stability certificate: V(x) = x'Px with critical
/// level V_min over the flow-out boundary of the polytope |delta_kj| <= pi/2.
struct Certificate {
  Eigen::MatrixXd P;
  double g = 0.0;
  double gamma = std::numeric_limits<double>::quiet_NaN();  // NaN: per-edge gain
  double v_min = 0.0;
};

enum class Verdict { stable, uncertified };

struct Assessment {
  Verdict verdict = Verdict::uncertified;
  bool in_polytope = false;
  double value = 0.0;  // x0' P x0
};

/// LMI whose feasible y parametrize positive definite P (upper triangle,
/// row-major) satisfying
///   [ Abar'P + P Abar + (1-g)^2/4 C'C   PB ]
///   [            B'P                   -I ] <= 0,   P >= eps_p I
/// with Abar = A - (1+g)/2 BC. Gauge-mode equalities (implied by feasibility)
/// are included so the solver works in the deflated subspace.
AffineLMI build_lmi5(const SystemMatrices& mats, double g, double eps_p = 1e-4);

/// Closed-form minimum of x'Px over each hyperplane c_kj'x = +-pi/2 - delta*_kj,
/// taken over lines connecting two generator buses. Conservative lower bound
/// on the flow-out boundary minimum (the direction condition is dropped).
/// Uses a Cholesky solve of P; throws on singular or indefinite P and on
/// networks with no generator-generator line.
double compute_vmin(const Eigen::MatrixXd& P, const SystemMatrices& mats,
                    const PowerNetwork& net);

/// Theorem-1 verdict for a fault-cleared state in deviation coordinates.
/// Containment in the polytope is checked on ALL edges.
Assessment assess(const Certificate& cert, const SystemMatrices& mats,
                  const Eigen::VectorXd& x0);

struct CertifyOptions {
  double eps_p = 1e-4;
  SolveOptions solve;
};

/// Full Theorem-1 pipeline: solve the LMI for P, then compute V_min.
/// gamma, when given, selects the uniform sector gain; otherwise the
/// per-edge minimum at the equilibrium is used.
Certificate certify(const PowerNetwork& net, const SystemMatrices& mats,
                    std::optional<double> gamma = std::nullopt,
                    const CertifyOptions& opts = {});

/// Certificate file round-trip (JSON: P row-major, g, gamma, v_min).
void save_certificate(const Certificate& cert, const std::string& path);
Certificate load_certificate(const std::string& path);

}  // namespace gridcert
