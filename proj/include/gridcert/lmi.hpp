#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gridcert/errors.hpp"

namespace gridcert {

/// Symmetric-affine expression G0 + sum_i y_i G_i.
struct AffineExpr {
  Eigen::MatrixXd constant;
  std::vector<Eigen::MatrixXd> coeffs;

  int dim() const { return static_cast<int>(constant.rows()); }
  Eigen::MatrixXd assemble(const Eigen::VectorXd& y) const;
};

/// Feasibility problem
///   nsd(y)    <= -nsd_margin * I
///   psd_k(y)  >= +psd_margins[k] * I
///   lower <= y <= upper          (empty vectors mean unbounded)
///   eq_A y = eq_b                (optional linear equalities)
///
/// structural_null lists directions along which every feasible nsd assembly
/// is known to vanish (e.g. the uniform-angle gauge mode); eigenvalues whose
/// eigenvectors align with them are exempt from the margin requirement.
struct AffineLMI {
  AffineExpr nsd;
  double nsd_margin = 0.0;
  std::vector<AffineExpr> psd;
  std::vector<double> psd_margins;
  Eigen::VectorXd lower, upper;
  Eigen::MatrixXd eq_A;
  Eigen::VectorXd eq_b;
  std::vector<Eigen::VectorXd> structural_null;

  int num_vars() const { return static_cast<int>(nsd.coeffs.size()); }
};

enum class LMIStatus { feasible, infeasible_suspected, max_iters };

struct LMISolution {
  Eigen::VectorXd y;
  double witness_eigenvalue = 0.0;  // lambda_max of the assembled nsd block
  double deflated_margin = 0.0;     // -lambda_max over non-exempt directions
  LMIStatus status = LMIStatus::max_iters;
  int iterations = 0;
};

struct SolveOptions {
  int max_iters = 5000;
  double slack_rel = 1e-9;   // acceptance slack, relative to block scale
  bool center = true;        // maximize the deflated margin by bisection
  double center_hi = 1.0;    // upper end of the margin bisection
  int center_rounds = 14;
  int center_iters = 3000;   // projection iterations per bisection probe
  Eigen::VectorXd initial;   // starting point (zeros if empty)
};

struct EigResult {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns
};

/// Symmetric eigendecomposition; rejects inputs asymmetric beyond 1e-12
/// relative to the max entry.
EigResult eig_sym(const Eigen::MatrixXd& m);

/// Alternating projections between the affine range of the blocks and the
/// semidefinite cones, followed by a centering bisection on a scalar margin
/// shift of the nsd block. Deterministic for identical inputs. Never reports
/// feasible when the witness eigenvalues contradict it; infeasibility is only
/// ever "suspected" (no dual certificate).
LMISolution solve_feasibility(const AffineLMI& lmi, const SolveOptions& opts = {});

/// Witness lambda_max per block (nsd block first, then each psd block in
/// <= orientation, i.e. -lambda_min for psd blocks). Independent of the
/// solver path.
std::vector<double> check_solution(const AffineLMI& lmi, const Eigen::VectorXd& y);

/// Upper-triangle parametrization of symmetric n x n matrices:
/// index pairs in row-major order, n(n+1)/2 scalars.
std::vector<std::pair<int, int>> sym_pairs(int n);
Eigen::MatrixXd sym_from_vec(const Eigen::VectorXd& y, int n);
Eigen::VectorXd sym_to_vec(const Eigen::MatrixXd& m);
/// Unit basis matrix for one upper-triangle slot (symmetric, two 1s off-diagonal).
Eigen::MatrixXd sym_basis(int n, int i, int j);

/// Append equality rows enforcing (expr(y)) * dir = 0 to the LMI. Only rows
/// with a nonzero dependence are kept. Used to pin structural null modes that
/// every feasible point must satisfy anyway.
void add_null_equalities(AffineLMI& lmi, const AffineExpr& expr,
                         const Eigen::VectorXd& dir);

}  // namespace gridcert
