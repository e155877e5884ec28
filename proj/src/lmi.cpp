#include "gridcert/lmi.hpp"

#include <algorithm>
#include <cmath>

namespace gridcert {

Eigen::MatrixXd AffineExpr::assemble(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd m = constant;
  for (int i = 0; i < static_cast<int>(coeffs.size()); ++i) m += y[i] * coeffs[i];
  return m;
}

EigResult eig_sym(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw InputError("eig_sym: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError("eig_sym: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw NumericalError("eig_sym: eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

std::vector<std::pair<int, int>> sym_pairs(int n) {
  std::vector<std::pair<int, int>> p;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) p.emplace_back(i, j);
  return p;
}

Eigen::MatrixXd sym_from_vec(const Eigen::VectorXd& y, int n) {
  Eigen::MatrixXd m(n, n);
  int t = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j, ++t) m(i, j) = m(j, i) = y[t];
  return m;
}

Eigen::VectorXd sym_to_vec(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd y(n * (n + 1) / 2);
  int t = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j, ++t) y[t] = m(i, j);
  return y;
}

Eigen::MatrixXd sym_basis(int n, int i, int j) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
  e(i, j) = 1.0;
  e(j, i) = 1.0;
  return e;
}

void add_null_equalities(AffineLMI& lmi, const AffineExpr& expr,
                         const Eigen::VectorXd& dir) {
  const int p = static_cast<int>(expr.coeffs.size());
  const int d = expr.dim();
  const Eigen::VectorXd c0 = expr.constant * dir;
  Eigen::MatrixXd rows(d, p);
  for (int i = 0; i < p; ++i) rows.col(i) = expr.coeffs[i] * dir;
  std::vector<int> keep;
  for (int r = 0; r < d; ++r)
    if (rows.row(r).cwiseAbs().maxCoeff() > 1e-14 || std::abs(c0[r]) > 1e-14)
      keep.push_back(r);
  const int old = static_cast<int>(lmi.eq_A.rows());
  Eigen::MatrixXd A(old + keep.size(), p);
  Eigen::VectorXd b(old + keep.size());
  if (old > 0) {
    A.topRows(old) = lmi.eq_A;
    b.head(old) = lmi.eq_b;
  }
  for (int i = 0; i < static_cast<int>(keep.size()); ++i) {
    A.row(old + i) = rows.row(keep[i]);
    b[old + i] = -c0[keep[i]];
  }
  lmi.eq_A = std::move(A);
  lmi.eq_b = std::move(b);
}

namespace {

struct UnifiedBlock {
  Eigen::MatrixXd constant;               // already oriented as <= -margin I
  Eigen::MatrixXd flat;                   // p x d*d, row i = vec(coeff_i)
  double margin = 0.0;
  std::vector<Eigen::VectorXd> nulls;     // normalized exempt directions
  int d = 0;
};

struct Reduced {
  Eigen::VectorXd ypart;   // particular solution of the equalities
  Eigen::MatrixXd basis;   // p x pz, orthonormal columns spanning ker(eq_A)
};

Reduced reduce_equalities(const AffineLMI& lmi) {
  const int p = lmi.num_vars();
  Reduced r;
  if (lmi.eq_A.rows() == 0) {
    r.ypart = Eigen::VectorXd::Zero(p);
    r.basis = Eigen::MatrixXd::Identity(p, p);
    return r;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      lmi.eq_A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, s.size() ? s[0] : 0.0);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > tol) ++rank;
  r.ypart = svd.solve(lmi.eq_b);
  r.basis = svd.matrixV().rightCols(p - rank);
  return r;
}

std::vector<UnifiedBlock> unify_blocks(const AffineLMI& lmi) {
  std::vector<UnifiedBlock> blocks;
  auto push = [&](const AffineExpr& e, double margin, double sign,
                  bool with_nulls) {
    UnifiedBlock b;
    b.d = e.dim();
    b.constant = sign * e.constant;
    b.flat.resize(e.coeffs.size(), b.d * b.d);
    for (int i = 0; i < static_cast<int>(e.coeffs.size()); ++i) {
      Eigen::MatrixXd g = sign * e.coeffs[i];
      b.flat.row(i) = Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
    }
    b.margin = margin;
    if (with_nulls)
      for (const auto& v : lmi.structural_null) b.nulls.push_back(v.normalized());
    blocks.push_back(std::move(b));
  };
  push(lmi.nsd, lmi.nsd_margin, +1.0, true);
  for (int k = 0; k < static_cast<int>(lmi.psd.size()); ++k)
    push(lmi.psd[k], lmi.psd_margins.empty() ? 0.0 : lmi.psd_margins[k], -1.0,
         false);
  return blocks;
}

// largest eigenvalue over directions not aligned with an exempt null mode
double deflated_max(const EigResult& eig, const std::vector<Eigen::VectorXd>& nulls,
                    std::vector<bool>* exempt_out = nullptr) {
  double lmax = -std::numeric_limits<double>::infinity();
  std::vector<bool> exempt(eig.values.size(), false);
  for (int i = 0; i < eig.values.size(); ++i) {
    for (const auto& v : nulls)
      if (std::abs(eig.vectors.col(i).dot(v)) > 0.9) exempt[i] = true;
    if (!exempt[i]) lmax = std::max(lmax, eig.values[i]);
  }
  if (exempt_out) *exempt_out = exempt;
  return lmax;
}

struct Projector {
  std::vector<UnifiedBlock> blocks;
  Reduced red;
  std::vector<Eigen::MatrixXd> flat_red;   // pz x d*d per block
  std::vector<Eigen::VectorXd> const_red;  // vec(constant at ypart) per block
  Eigen::LDLT<Eigen::MatrixXd> gram;
  Eigen::VectorXd lower, upper;
  double slack_rel = 1e-9;

  explicit Projector(const AffineLMI& lmi, double slack)
      : blocks(unify_blocks(lmi)), red(reduce_equalities(lmi)), slack_rel(slack) {
    const int pz = static_cast<int>(red.basis.cols());
    Eigen::MatrixXd gram_m = Eigen::MatrixXd::Zero(pz, pz);
    for (auto& b : blocks) {
      flat_red.push_back(red.basis.transpose() * b.flat);
      Eigen::VectorXd c =
          Eigen::Map<Eigen::VectorXd>(b.constant.data(), b.constant.size());
      c += b.flat.transpose() * red.ypart;
      const_red.push_back(std::move(c));
      gram_m += flat_red.back() * flat_red.back().transpose();
    }
    gram_m += 1e-13 * std::max(1.0, gram_m.trace() / std::max(1, pz)) *
              Eigen::MatrixXd::Identity(pz, pz);
    gram.compute(gram_m);
    lower = lmi.lower;
    upper = lmi.upper;
  }

  Eigen::VectorXd to_y(const Eigen::VectorXd& z) const {
    return red.ypart + red.basis * z;
  }
  Eigen::VectorXd to_z(const Eigen::VectorXd& y) const {
    return red.basis.transpose() * (y - red.ypart);
  }

  // Run alternating projections with margins shifted by t on the first block.
  // Returns true when every block satisfies its (shifted) margin.
  bool run(Eigen::VectorXd& z, double t, int iters, int* used = nullptr,
           bool* stalled = nullptr) {
    const int pz = static_cast<int>(z.size());
    Eigen::VectorXd z_prev = z;
    for (int it = 0; it < iters; ++it) {
      bool ok = true;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(pz);
      for (int b = 0; b < static_cast<int>(blocks.size()); ++b) {
        const UnifiedBlock& ub = blocks[b];
        const double margin = ub.margin + (b == 0 ? t : 0.0);
        Eigen::VectorXd vecM = const_red[b] + flat_red[b].transpose() * z;
        Eigen::MatrixXd M = Eigen::Map<Eigen::MatrixXd>(vecM.data(), ub.d, ub.d);
        M = 0.5 * (M + M.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        const Eigen::VectorXd& w = es.eigenvalues();
        const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
        std::vector<bool> exempt;
        const double lmax = deflated_max({w, es.eigenvectors()}, ub.nulls, &exempt);
        if (lmax > -margin + slack_rel * scale) ok = false;
        Eigen::VectorXd wc(w.size());
        for (int i = 0; i < w.size(); ++i)
          wc[i] = exempt[i] ? std::min(w[i], 0.0) : std::min(w[i], -margin);
        Eigen::MatrixXd Z = es.eigenvectors() * wc.asDiagonal() *
                            es.eigenvectors().transpose();
        Eigen::VectorXd vecZ = Eigen::Map<Eigen::VectorXd>(Z.data(), Z.size());
        rhs += flat_red[b] * (vecZ - const_red[b]);
      }
      if (ok) {
        if (used) *used = it;
        return true;
      }
      z_prev = z;
      z = gram.solve(rhs);
      if (lower.size() > 0) {
        Eigen::VectorXd y = to_y(z).cwiseMax(lower).cwiseMin(upper);
        z = to_z(y);
      }
      if (stalled)
        *stalled = (z - z_prev).norm() < 1e-13 * (1.0 + z.norm());
    }
    if (used) *used = iters;
    return false;
  }
};

}  // namespace

std::vector<double> check_solution(const AffineLMI& lmi, const Eigen::VectorXd& y) {
  std::vector<double> witnesses;
  witnesses.push_back(eig_sym(lmi.nsd.assemble(y)).values.maxCoeff());
  for (const auto& e : lmi.psd)
    witnesses.push_back(eig_sym(-e.assemble(y)).values.maxCoeff());
  return witnesses;
}

LMISolution solve_feasibility(const AffineLMI& lmi, const SolveOptions& opts) {
  if (lmi.nsd.coeffs.empty())
    throw InputError("solve_feasibility: no decision variables");
  for (const auto& e : lmi.psd)
    if (static_cast<int>(e.coeffs.size()) != lmi.num_vars())
      throw InputError("solve_feasibility: inconsistent variable counts");

  Projector proj(lmi, opts.slack_rel);
  Eigen::VectorXd y0 = opts.initial.size() == lmi.num_vars()
                           ? opts.initial
                           : Eigen::VectorXd::Zero(lmi.num_vars());
  if (lmi.lower.size() > 0) y0 = y0.cwiseMax(lmi.lower).cwiseMin(lmi.upper);
  Eigen::VectorXd z = proj.to_z(y0);

  LMISolution sol;
  int used = 0;
  bool stalled = false;
  const bool ok = proj.run(z, 0.0, opts.max_iters, &used, &stalled);
  sol.iterations = used;
  if (ok && opts.center) {
    // bisection on a uniform extra margin for the dynamics block
    Eigen::VectorXd best = z;
    double lo = 0.0, hi = opts.center_hi;
    for (int round = 0; round < opts.center_rounds; ++round) {
      const double t = 0.5 * (lo + hi);
      Eigen::VectorXd zt = best;
      int it2 = 0;
      if (proj.run(zt, t, opts.center_iters, &it2)) {
        best = zt;
        lo = t;
      } else {
        hi = t;
      }
      sol.iterations += it2;
    }
    z = best;
  }

  sol.y = proj.to_y(z);
  const EigResult nsd_eig = eig_sym(lmi.nsd.assemble(sol.y));
  sol.witness_eigenvalue = nsd_eig.values.maxCoeff();
  std::vector<Eigen::VectorXd> nulls;
  for (const auto& v : lmi.structural_null) nulls.push_back(v.normalized());
  sol.deflated_margin = -deflated_max(nsd_eig, nulls);
  sol.status = ok ? LMIStatus::feasible
                  : (stalled ? LMIStatus::infeasible_suspected
                             : LMIStatus::max_iters);
  return sol;
}

}  // namespace gridcert
