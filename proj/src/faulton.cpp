#include "gridcert/faulton.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gridcert/simulator.hpp"

namespace gridcert {

using nlohmann::json;

namespace {

// B(s) = B0 + sum_l s_l * unit_l: each column of B scales linearly with the
// susceptance of its line (a_kj = V_k V_j B_kj enters B only as a column factor).
struct AffineB {
  Eigen::MatrixXd B0;
  std::vector<Eigen::MatrixXd> units;
};

AffineB decompose_b(const SystemMatrices& mats, const PowerNetwork& net,
                    const std::vector<AdjustableLine>& adjustable) {
  AffineB out;
  out.B0 = mats.B;
  for (const auto& al : adjustable) {
    if (!(al.lower <= al.upper) || al.lower <= 0.0)
      throw InputError("adjustable line bounds must satisfy 0 < lower <= upper");
    const int e = net.line_index(al.from, al.to);
    const double b = net.lines()[static_cast<size_t>(e)].susceptance;
    Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(mats.B.rows(), mats.B.cols());
    unit.col(e) = mats.B.col(e) / b;
    out.B0.col(e).setZero();
    out.units.push_back(std::move(unit));
  }
  return out;
}

// [ Abar'P + P Abar + (1-g)^2/4 C'C    P Bbar ]
// [           Bbar'P                     -I   ]  with Bbar = [B, sqrt(mu) B d_uv]
Eigen::MatrixXd block9(const SystemMatrices& mats, double g, double mu,
                       int trip_e, const Eigen::MatrixXd& B,
                       const Eigen::MatrixXd& P) {
  const int d = mats.state_dim();
  const int ne = mats.edge_count();
  Eigen::MatrixXd Bbar(d, ne + 1);
  Bbar.leftCols(ne) = B;
  Bbar.col(ne) = std::sqrt(mu) * B.col(trip_e);
  const Eigen::MatrixXd Abar = mats.A - 0.5 * (1.0 + g) * B * mats.C;
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(d + ne + 1, d + ne + 1);
  N.topLeftCorner(d, d) =
      Abar.transpose() * P + P * Abar +
      (std::pow(1.0 - g, 2) / 4.0) * mats.C.transpose() * mats.C;
  N.topRightCorner(d, ne + 1) = P * Bbar;
  N.bottomLeftCorner(ne + 1, d) = Bbar.transpose() * P;
  N.bottomRightCorner(ne + 1, ne + 1) =
      -Eigen::MatrixXd::Identity(ne + 1, ne + 1);
  return N;
}

Eigen::MatrixXd b_at(const AffineB& ab, const Eigen::VectorXd& s) {
  Eigen::MatrixXd B = ab.B0;
  for (size_t l = 0; l < ab.units.size(); ++l)
    B += s[static_cast<Eigen::Index>(l)] * ab.units[l];
  return B;
}

std::string edge_key(const std::pair<int, int>& e) {
  return std::to_string(e.first) + "-" + std::to_string(e.second);
}

}  // namespace

AffineLMI build_lmi9(const SystemMatrices& mats, const PowerNetwork& net,
                     const std::vector<AdjustableLine>& adjustable,
                     std::pair<int, int> tripped, double g, double mu,
                     const std::optional<Eigen::MatrixXd>& fixed_P,
                     const std::optional<Eigen::VectorXd>& fixed_s,
                     const Eigen::MatrixXd& dominated) {
  if (fixed_P.has_value() == fixed_s.has_value())
    throw InputError(
        "build_lmi9: exactly one of the matrix and the susceptances must be "
        "fixed; freeing both makes the problem bilinear");
  if (!(g > 0.0 && g <= 1.0)) throw InputError("build_lmi9: need 0 < g <= 1");
  if (!(mu > 0.0)) throw InputError("build_lmi9: need mu > 0");
  const int trip_e = net.line_index(tripped.first, tripped.second);
  const int d = mats.state_dim();
  const int ne = mats.edge_count();
  const AffineB ab = decompose_b(mats, net, adjustable);

  AffineLMI lmi;
  lmi.nsd_margin = 0.0;  // the gauge mode sits at zero for every candidate

  if (fixed_P) {
    // variables: one susceptance per adjustable line, box constrained
    const int nl = static_cast<int>(adjustable.size());
    if (nl == 0) throw InputError("build_lmi9: no adjustable lines");
    lmi.nsd.constant = block9(mats, g, mu, trip_e, ab.B0, *fixed_P);
    for (int l = 0; l < nl; ++l) {
      Eigen::MatrixXd with =
          block9(mats, g, mu, trip_e, ab.B0 + ab.units[static_cast<size_t>(l)],
                 *fixed_P);
      lmi.nsd.coeffs.push_back(with - lmi.nsd.constant);
    }
    lmi.lower.resize(nl);
    lmi.upper.resize(nl);
    for (int l = 0; l < nl; ++l) {
      lmi.lower[l] = adjustable[static_cast<size_t>(l)].lower;
      lmi.upper[l] = adjustable[static_cast<size_t>(l)].upper;
    }
  } else {
    // variables: upper triangle of P~, with P~ - P >= 0 appended
    const Eigen::MatrixXd B = b_at(ab, *fixed_s);
    const auto pairs = sym_pairs(d);
    lmi.nsd.constant =
        block9(mats, g, mu, trip_e, B, Eigen::MatrixXd::Zero(d, d));
    AffineExpr dom;
    dom.constant = -dominated;
    for (const auto& [i, j] : pairs) {
      const Eigen::MatrixXd E = sym_basis(d, i, j);
      lmi.nsd.coeffs.push_back(block9(mats, g, mu, trip_e, B, E) -
                               lmi.nsd.constant);
      dom.coeffs.push_back(E);
    }
    if (dominated.rows() != d || dominated.cols() != d)
      throw InputError("build_lmi9: dominated matrix has wrong dimensions");
    lmi.psd.push_back(std::move(dom));
    lmi.psd_margins.push_back(0.0);
  }

  // uniform angle shift, padded with zeros over the [F; trip] channel
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d + ne + 1);
  for (int c = 0; c < d; ++c)
    if (mats.C.col(c).cwiseAbs().maxCoeff() > 0.0) v[c] = 1.0;
  if (!fixed_P) add_null_equalities(lmi, lmi.nsd, v);
  lmi.structural_null.push_back(v);
  return lmi;
}

FaultOnDesign design_faulton(const PowerNetwork& net, const SystemMatrices& mats,
                             const Certificate& cert,
                             std::pair<int, int> tripped,
                             const std::vector<AdjustableLine>& adjustable,
                             double clearing_time, const FaultOnOptions& opts) {
  if (!(clearing_time > 0.0))
    throw InputError("design_faulton: clearing time must be positive");
  net.line_index(tripped.first, tripped.second);  // reject unknown lines early
  if (adjustable.empty())
    throw InputError("design_faulton: at least one adjustable line is required");

  std::mt19937 rng(opts.seed);
  std::uniform_real_distribution<double> jitter(0.0, 0.5);
  const int d = mats.state_dim();

  Certificate current = cert;
  for (int attempt = 0; attempt <= opts.max_restarts; ++attempt) {
    if (attempt > 0) {
      // fresh certificate from a jittered starting point; the growth LMI may
      // be infeasible for one P yet feasible for another
      CertifyOptions copts = opts.certify;
      Eigen::MatrixXd init = Eigen::MatrixXd::Identity(d, d);
      for (int i = 0; i < d; ++i) init(i, i) += jitter(rng);
      copts.solve.initial = sym_to_vec(init);
      std::optional<double> gamma;
      if (!std::isnan(cert.gamma)) gamma = cert.gamma;
      current = certify(net, mats, gamma, copts);
    }
    const double mu = clearing_time / current.v_min;

    Eigen::VectorXd s_now(static_cast<Eigen::Index>(adjustable.size()));
    for (size_t l = 0; l < adjustable.size(); ++l) {
      const auto& al = adjustable[l];
      s_now[static_cast<Eigen::Index>(l)] =
          net.lines()[static_cast<size_t>(net.line_index(al.from, al.to))]
              .susceptance;
    }

    SolveOptions sopts = opts.solve;
    LMISolution sol;
    AffineLMI lmi;
    if (opts.mode == DesignMode::fixed_matrix) {
      lmi = build_lmi9(mats, net, adjustable, tripped, current.g, mu,
                       current.P, std::nullopt);
      sopts.initial = s_now;
      sol = solve_feasibility(lmi, sopts);
    } else {
      lmi = build_lmi9(mats, net, adjustable, tripped, current.g, mu,
                       std::nullopt, s_now, current.P);
      sopts.initial = sym_to_vec(current.P);
      sol = solve_feasibility(lmi, sopts);
    }
    if (sol.status != LMIStatus::feasible) continue;

    FaultOnDesign out;
    out.tripped = tripped;
    out.mu = mu;
    out.mode = opts.mode;
    out.margin = sol.deflated_margin;
    if (opts.mode == DesignMode::fixed_matrix) {
      out.P_tilde = current.P;
      for (size_t l = 0; l < adjustable.size(); ++l)
        out.tuned[{adjustable[l].from, adjustable[l].to}] =
            sol.y[static_cast<Eigen::Index>(l)];
    } else {
      out.P_tilde = sym_from_vec(sol.y, d);
      for (size_t l = 0; l < adjustable.size(); ++l)
        out.tuned[{adjustable[l].from, adjustable[l].to}] =
            s_now[static_cast<Eigen::Index>(l)];
    }
    return out;
  }
  throw NumericalError(
      "design_faulton: no feasible emergency schedule found after " +
      std::to_string(opts.max_restarts + 1) + " certificate attempts");
}

VerifyReport verify_design(const FaultOnDesign& design, const PowerNetwork& net,
                           const Certificate& cert, const State& equilibrium,
                           double clearing_time, double t_end, double dt) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  ScenarioSpec spec{net, design.tripped, design.tuned, clearing_time, t_end, dt};
  const Trajectory traj = simulate(spec, equilibrium, &cert, &equilibrium);

  const int n = net.size();
  const int m = net.generator_count();
  auto deviation = [&](const State& s) {
    Eigen::VectorXd x(n + m);
    x.head(m) = s.angles.head(m) - equilibrium.angles.head(m);
    x.segment(m, m) = s.velocities;
    x.tail(n - m) = s.angles.tail(n - m) - equilibrium.angles.tail(n - m);
    return x;
  };
  auto in_polytope = [&](const State& s) {
    for (const Line& ln : net.lines()) {
      const double diff =
          s.angles[net.bus_index(ln.from)] - s.angles[net.bus_index(ln.to)];
      if (std::abs(diff) > half_pi) return false;
    }
    return true;
  };

  VerifyReport rep;
  rep.growth_limit = (1.0 + 1e-3) / design.mu;
  rep.growth_bound_ok = true;
  if (traj.phase_mark) {
    const int mark = *traj.phase_mark;
    for (int k = 0; k + 1 <= mark; ++k) {
      const auto ku = static_cast<size_t>(k);
      if (!in_polytope(traj.states[ku]) || !in_polytope(traj.states[ku + 1]))
        continue;  // the bound only holds inside the polytope
      const Eigen::VectorXd x0 = deviation(traj.states[ku]);
      const Eigen::VectorXd x1 = deviation(traj.states[ku + 1]);
      const double v0 = x0.dot(design.P_tilde * x0);
      const double v1 = x1.dot(design.P_tilde * x1);
      const double rate = (v1 - v0) / (traj.times[ku + 1] - traj.times[ku]);
      rep.max_growth_rate = std::max(rep.max_growth_rate, rate);
      if (rate > rep.growth_limit) rep.growth_bound_ok = false;
    }
    const Eigen::VectorXd xc =
        deviation(traj.states[static_cast<size_t>(mark)]);
    rep.value_at_clearing = xc.dot(cert.P * xc);
    rep.cleared_below_vmin = rep.value_at_clearing < cert.v_min;
  }
  rep.postfault_converged = converged_to(traj, net, equilibrium);
  return rep;
}

void save_design(const FaultOnDesign& design, const std::string& path) {
  json j;
  if (design.tripped)
    j["tripped"] = {design.tripped->first, design.tripped->second};
  else
    j["tripped"] = nullptr;
  json tuned = json::object();
  for (const auto& [edge, value] : design.tuned) tuned[edge_key(edge)] = value;
  j["tuned"] = tuned;
  j["mu"] = design.mu;
  j["mode"] = design.mode == DesignMode::fixed_matrix ? "fixed-matrix"
                                                      : "fixed-susceptance";
  j["margin"] = design.margin;
  const int d = static_cast<int>(design.P_tilde.rows());
  std::vector<std::vector<double>> rows(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k)
      rows[static_cast<size_t>(i)].push_back(design.P_tilde(i, k));
  j["P"] = rows;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write design file: " + path);
  out << j.dump(2) << "\n";
}

FaultOnDesign load_design(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open design file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("design file is not valid JSON: ") + e.what());
  }
  FaultOnDesign out;
  if (j.contains("tripped") && !j["tripped"].is_null()) {
    const auto& t = j["tripped"];
    if (!t.is_array() || t.size() != 2)
      throw InputError("design file: 'tripped' must be a pair of bus ids");
    out.tripped = {t[0].get<int>(), t[1].get<int>()};
  }
  if (j.contains("tuned")) {
    for (const auto& [key, value] : j["tuned"].items()) {
      std::istringstream ks(key);
      int from = 0, to = 0;
      char dash = 0;
      if (!(ks >> from >> dash >> to) || dash != '-')
        throw InputError("design file: tuned key must look like \"1-2\": " + key);
      out.tuned[{from, to}] = value.get<double>();
    }
  }
  out.mu = j.value("mu", 0.0);
  const std::string mode = j.value("mode", "fixed-matrix");
  if (mode == "fixed-matrix")
    out.mode = DesignMode::fixed_matrix;
  else if (mode == "fixed-susceptance")
    out.mode = DesignMode::fixed_susceptance;
  else
    throw InputError("design file: unknown mode: " + mode);
  out.margin = j.value("margin", 0.0);
  if (j.contains("P") && j["P"].is_array()) {
    const auto& rows = j["P"];
    const int d = static_cast<int>(rows.size());
    out.P_tilde.resize(d, d);
    for (int i = 0; i < d; ++i) {
      if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != d)
        throw InputError("design file: 'P' is not square");
      for (int k = 0; k < d; ++k) out.P_tilde(i, k) = rows[i][k].get<double>();
    }
  }
  return out;
}

}  // namespace gridcert
