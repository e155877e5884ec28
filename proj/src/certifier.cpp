#include "gridcert/certifier.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace gridcert {

using nlohmann::json;

AffineLMI build_lmi5(const SystemMatrices& mats, double g, double eps_p) {
  if (!(g > 0.0 && g <= 1.0)) throw InputError("build_lmi5: need 0 < g <= 1");
  const int d = mats.state_dim();
  const int ne = mats.edge_count();
  const auto pairs = sym_pairs(d);
  const int p = static_cast<int>(pairs.size());

  const Eigen::MatrixXd Abar = mats.A - 0.5 * (1.0 + g) * mats.B * mats.C;
  const Eigen::MatrixXd CtC =
      (std::pow(1.0 - g, 2) / 4.0) * mats.C.transpose() * mats.C;

  AffineLMI lmi;
  lmi.nsd.constant = Eigen::MatrixXd::Zero(d + ne, d + ne);
  lmi.nsd.constant.topLeftCorner(d, d) = CtC;
  lmi.nsd.constant.bottomRightCorner(ne, ne) = -Eigen::MatrixXd::Identity(ne, ne);
  lmi.nsd_margin = 0.0;  // non-strict: the gauge mode forbids a uniform margin
  AffineExpr pblock;
  pblock.constant = Eigen::MatrixXd::Zero(d, d);
  for (int t = 0; t < p; ++t) {
    const auto [i, j] = pairs[t];
    const Eigen::MatrixXd E = sym_basis(d, i, j);
    Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(d + ne, d + ne);
    blk.topLeftCorner(d, d) = Abar.transpose() * E + E * Abar;
    blk.topRightCorner(d, ne) = E * mats.B;
    blk.bottomLeftCorner(ne, d) = blk.topRightCorner(d, ne).transpose();
    lmi.nsd.coeffs.push_back(std::move(blk));
    pblock.coeffs.push_back(E);
  }
  lmi.psd.push_back(std::move(pblock));
  lmi.psd_margins.push_back(eps_p);

  // uniform angle shift: structural null of every feasible assembly
  Eigen::VectorXd v(d + ne);
  v.setZero();
  // gauge_direction needs the network; reconstruct from C: angle coordinates
  // are exactly the ones C touches
  for (int c = 0; c < d; ++c)
    if (mats.C.col(c).cwiseAbs().maxCoeff() > 0.0) v[c] = 1.0;
  add_null_equalities(lmi, lmi.nsd, v);
  lmi.structural_null.push_back(v);
  return lmi;
}

double compute_vmin(const Eigen::MatrixXd& P, const SystemMatrices& mats,
                    const PowerNetwork& net) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw NumericalError("compute_vmin: P is not positive definite");
  double vmin = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int e = 0; e < mats.edge_count(); ++e) {
    const auto [from, to] = mats.edge_order[e];
    if (net.bus(from).kind != BusKind::generator ||
        net.bus(to).kind != BusKind::generator)
      continue;
    any = true;
    const double ds = mats.eq_angle_diffs[e];
    if (!(std::abs(ds) < half_pi))
      throw NumericalError("compute_vmin: equilibrium outside the polytope");
    const Eigen::VectorXd c = mats.C.row(e).transpose();
    const double quad = c.dot(llt.solve(c));  // c' P^-1 c
    for (const double sigma : {+1.0, -1.0}) {
      const double num = std::pow(sigma * half_pi - ds, 2);
      vmin = std::min(vmin, num / quad);
    }
  }
  if (!any)
    throw InputError(
        "compute_vmin: no line connects two generator buses; the flow-out "
        "boundary of the certificate is undefined for this network");
  return vmin;
}

Assessment assess(const Certificate& cert, const SystemMatrices& mats,
                  const Eigen::VectorXd& x0) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  Assessment out;
  const Eigen::VectorXd cx = mats.C * x0;
  out.in_polytope = true;
  for (int e = 0; e < mats.edge_count(); ++e)
    if (std::abs(mats.eq_angle_diffs[e] + cx[e]) > half_pi) out.in_polytope = false;
  out.value = x0.dot(cert.P * x0);
  out.verdict = (out.in_polytope && out.value < cert.v_min) ? Verdict::stable
                                                            : Verdict::uncertified;
  return out;
}

Certificate certify(const PowerNetwork& net, const SystemMatrices& mats,
                    std::optional<double> gamma, const CertifyOptions& opts) {
  Certificate cert;
  cert.g = gamma ? sector_gain_uniform(*gamma) : sector_gain(mats.eq_angle_diffs);
  cert.gamma = gamma ? *gamma : std::numeric_limits<double>::quiet_NaN();

  AffineLMI lmi = build_lmi5(mats, cert.g, opts.eps_p);
  SolveOptions sopts = opts.solve;
  if (sopts.initial.size() == 0)
    sopts.initial = sym_to_vec(Eigen::MatrixXd::Identity(mats.state_dim(),
                                                         mats.state_dim()));
  const LMISolution sol = solve_feasibility(lmi, sopts);
  if (sol.status != LMIStatus::feasible)
    throw NumericalError("certify: LMI feasibility search failed (witness "
                         "lambda_max = " +
                         std::to_string(sol.witness_eigenvalue) + ")");
  cert.P = sym_from_vec(sol.y, mats.state_dim());
  cert.v_min = compute_vmin(cert.P, mats, net);
  return cert;
}

void save_certificate(const Certificate& cert, const std::string& path) {
  json j;
  const int n = static_cast<int>(cert.P.rows());
  std::vector<std::vector<double>> rows(n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) rows[i].push_back(cert.P(i, k));
  j["P"] = rows;
  j["g"] = cert.g;
  if (std::isnan(cert.gamma))
    j["gamma"] = nullptr;
  else
    j["gamma"] = cert.gamma;
  j["v_min"] = cert.v_min;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write certificate file: " + path);
  out << j.dump(2) << "\n";
}

Certificate load_certificate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open certificate file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("certificate file is not valid JSON: ") + e.what());
  }
  if (!j.contains("P") || !j["P"].is_array())
    throw InputError("certificate file: missing matrix 'P'");
  const auto& rows = j["P"];
  const int n = static_cast<int>(rows.size());
  Certificate cert;
  cert.P.resize(n, n);
  for (int i = 0; i < n; ++i) {
    if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != n)
      throw InputError("certificate file: 'P' is not square");
    for (int k = 0; k < n; ++k) cert.P(i, k) = rows[i][k].get<double>();
  }
  cert.g = j.value("g", 0.0);
  cert.gamma = (j.contains("gamma") && !j["gamma"].is_null())
                   ? j["gamma"].get<double>()
                   : std::numeric_limits<double>::quiet_NaN();
  cert.v_min = j.value("v_min", 0.0);
  return cert;
}

}  // namespace gridcert
