#include "gridcert/postfault.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gridcert/powerflow.hpp"

namespace gridcert {

Eigen::VectorXd select_susceptances(const PowerNetwork& net,
                                    const std::vector<AdjustableLine>& adjustable,
                                    const Eigen::VectorXd& target_angles) {
  const int n = net.size();
  const int nl = static_cast<int>(adjustable.size());
  if (nl == 0) throw InputError("select_susceptances: no adjustable lines");
  if (target_angles.size() != n)
    throw InputError("select_susceptances: wrong angle vector length");

  // mismatch(s) = c + H s: base flows from non-adjustable lines, one column
  // of angle-difference sines per adjustable line
  std::vector<int> adj_edge(static_cast<size_t>(nl));
  Eigen::VectorXd lower(nl), upper(nl);
  for (int l = 0; l < nl; ++l) {
    const auto& al = adjustable[static_cast<size_t>(l)];
    if (!(al.lower <= al.upper) || al.lower <= 0.0)
      throw InputError(
          "select_susceptances: bounds must satisfy 0 < lower <= upper");
    adj_edge[static_cast<size_t>(l)] = net.line_index(al.from, al.to);
    lower[l] = al.lower;
    upper[l] = al.upper;
  }
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = net.buses()[static_cast<size_t>(i)].injection;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, nl);
  const Eigen::VectorXd a = net.coupling_coefficients();
  for (int e = 0; e < net.line_count(); ++e) {
    const Line& ln = net.lines()[static_cast<size_t>(e)];
    const int k = net.bus_index(ln.from);
    const int j = net.bus_index(ln.to);
    const double sine = std::sin(target_angles[k] - target_angles[j]);
    const auto it = std::find(adj_edge.begin(), adj_edge.end(), e);
    if (it == adj_edge.end()) {
      c[k] -= a[e] * sine;
      c[j] += a[e] * sine;
    } else {
      const int l = static_cast<int>(it - adj_edge.begin());
      const double per_b = ln.susceptance > 0.0 ? a[e] / ln.susceptance : 0.0;
      H(k, l) -= per_b * sine;
      H(j, l) += per_b * sine;
    }
  }

  // projected gradient with exact line search on f(s) = |c + H s|^2
  Eigen::VectorXd s = 0.5 * (lower + upper);
  const double gtol = 1e-11 * (1.0 + c.norm());
  for (int iter = 0; iter < 20000; ++iter) {
    const Eigen::VectorXd grad = 2.0 * H.transpose() * (c + H * s);
    Eigen::VectorXd d = -grad;
    for (int l = 0; l < nl; ++l) {
      if (s[l] <= lower[l] && d[l] < 0.0) d[l] = 0.0;
      if (s[l] >= upper[l] && d[l] > 0.0) d[l] = 0.0;
    }
    if (d.norm() <= gtol) break;
    const double hd2 = (H * d).squaredNorm();
    const double alpha = hd2 > 0.0 ? -grad.dot(d) / (2.0 * hd2) : 0.0;
    if (alpha <= 0.0) break;
    s = (s + alpha * d).cwiseMax(lower).cwiseMin(upper);
  }

  // first-order optimality over the box
  const Eigen::VectorXd grad = 2.0 * H.transpose() * (c + H * s);
  const double ktol = 1e-8 * (1.0 + grad.norm());
  for (int l = 0; l < nl; ++l) {
    const bool at_lower = s[l] <= lower[l] + 1e-12;
    const bool at_upper = s[l] >= upper[l] - 1e-12;
    const bool ok = (at_lower && grad[l] >= -ktol) ||
                    (at_upper && grad[l] <= ktol) ||
                    (!at_lower && !at_upper && std::abs(grad[l]) <= ktol);
    if (!ok)
      throw NumericalError(
          "select_susceptances: projected gradient failed to reach "
          "first-order optimality");
  }
  return s;
}

AdaptResult adapt_certificate(const PowerNetwork& net,
                              const SystemMatrices& mats,
                              const Eigen::VectorXd& x0_dev,
                              const AdaptOptions& opts) {
  const int d = mats.state_dim();
  if (x0_dev.size() != d)
    throw InputError("adapt_certificate: state has wrong dimension");
  const double g = sector_gain(mats.eq_angle_diffs);
  AffineLMI lmi = build_lmi5(mats, g, opts.eps_p);
  const auto pairs = sym_pairs(d);
  const int p = static_cast<int>(pairs.size());

  // pin trace(P) = dim: removes the free scaling that the pressure cap would
  // otherwise exploit without changing V(x0)/V_min
  {
    const int rows = static_cast<int>(lmi.eq_A.rows());
    lmi.eq_A.conservativeResize(rows + 1, p);
    lmi.eq_b.conservativeResize(rows + 1);
    for (int t = 0; t < p; ++t)
      lmi.eq_A(rows, t) = pairs[static_cast<size_t>(t)].first ==
                                  pairs[static_cast<size_t>(t)].second
                              ? 1.0
                              : 0.0;
    lmi.eq_b[rows] = static_cast<double>(d);
  }

  // quadratic-form coefficients of x0'P x0 in the upper-triangle variables
  Eigen::VectorXd quad(p);
  for (int t = 0; t < p; ++t) {
    const auto [i, j] = pairs[static_cast<size_t>(t)];
    quad[t] = i == j ? x0_dev[i] * x0_dev[i] : 2.0 * x0_dev[i] * x0_dev[j];
  }

  AdaptResult best;
  SolveOptions sopts = opts.solve;
  sopts.initial = sym_to_vec(Eigen::MatrixXd::Identity(d, d));
  double cap = 0.0;
  for (int round = 0; round <= opts.max_rounds; ++round) {
    AffineLMI round_lmi = lmi;
    if (round > 0) {
      // 1x1 pressure block: cap - x0'P x0 >= 0
      AffineExpr pressure;
      pressure.constant = Eigen::MatrixXd::Constant(1, 1, cap);
      for (int t = 0; t < p; ++t)
        pressure.coeffs.push_back(Eigen::MatrixXd::Constant(1, 1, -quad[t]));
      round_lmi.psd.push_back(std::move(pressure));
      round_lmi.psd_margins.push_back(0.0);
    }
    const LMISolution sol = solve_feasibility(round_lmi, sopts);
    if (sol.status != LMIStatus::feasible) {
      if (round == 0)
        throw NumericalError("adapt_certificate: base LMI is infeasible");
      break;  // the cap went below what any feasible P can reach
    }
    Certificate cand;
    cand.P = sym_from_vec(sol.y, d);
    cand.g = g;
    cand.v_min = compute_vmin(cand.P, mats, net);
    const double value = x0_dev.dot(cand.P * x0_dev);
    best.certificate = cand;
    best.rounds = round;
    if (value < cand.v_min) {
      best.contained = true;
      return best;
    }
    cap = opts.shrink * value;
    sopts.initial = sol.y;  // warm start the tighter round
  }
  best.contained = false;
  return best;
}

PostFaultDesign design_postfault(const PowerNetwork& net, const State& x0,
                                 const std::vector<AdjustableLine>& adjustable,
                                 const PostFaultOptions& opts) {
  if (x0.angles.size() != net.size())
    throw InputError("design_postfault: state has wrong dimension");
  if (x0.velocities.size() != net.generator_count())
    throw InputError("design_postfault: state has wrong velocity dimension");
  if (x0.velocities.size() > 0 &&
      x0.velocities.cwiseAbs().maxCoeff() > 1e-9)
    throw InputError(
        "design_postfault: the fault-cleared state must be static "
        "(zero generator velocities)");

  const Eigen::VectorXd s = select_susceptances(net, adjustable, x0.angles);

  PostFaultDesign out;
  PowerNetwork tuned = net;
  for (size_t l = 0; l < adjustable.size(); ++l) {
    const auto& al = adjustable[l];
    tuned = tuned.with_susceptance(al.from, al.to,
                                   s[static_cast<Eigen::Index>(l)]);
    out.tuned[{al.from, al.to}] = s[static_cast<Eigen::Index>(l)];
  }

  out.equilibrium =
      solve_equilibrium(tuned, std::nullopt, opts.powerflow_iterations);
  State eq;
  eq.angles = out.equilibrium.angles;
  eq.velocities = Eigen::VectorXd::Zero(net.generator_count());
  const SystemMatrices mats = assemble_matrices(tuned, eq);

  const Eigen::VectorXd x0_dev = mats.deviation(tuned, x0, eq);
  const AdaptResult adapted = adapt_certificate(tuned, mats, x0_dev, opts.adapt);
  out.certificate = adapted.certificate;
  out.adapt_rounds = adapted.rounds;
  out.contained = adapted.contained &&
                  assess(out.certificate, mats, x0_dev).verdict == Verdict::stable;
  return out;
}

void save_postfault_design(const PostFaultDesign& design,
                           const PowerNetwork& net, const std::string& path) {
  nlohmann::json j;
  j["tuned"] = nlohmann::json::object();
  for (const auto& [edge, value] : design.tuned)
    j["tuned"][std::to_string(edge.first) + "-" + std::to_string(edge.second)] =
        value;
  j["contained"] = design.contained;
  j["adapt_rounds"] = design.adapt_rounds;
  j["equilibrium_angles"] = nlohmann::json::object();
  for (int i = 0; i < net.size(); ++i)
    j["equilibrium_angles"]
     [std::to_string(net.buses()[static_cast<size_t>(i)].id)] =
         design.equilibrium.angles[i];
  std::ofstream out(path);
  if (!out) throw InputError("cannot write design file: " + path);
  out << j.dump(2) << "\n";
}

State load_state(const std::string& path, const PowerNetwork& net) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open state file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("state file is not valid JSON: ") + e.what());
  }
  if (!j.contains("angles") || !j["angles"].is_object())
    throw InputError("state file: missing 'angles' object keyed by bus id");
  State s;
  s.angles.resize(net.size());
  s.velocities = Eigen::VectorXd::Zero(net.generator_count());
  std::vector<bool> seen(static_cast<size_t>(net.size()), false);
  for (const auto& [key, value] : j["angles"].items()) {
    const int idx = net.bus_index(std::stoi(key));
    s.angles[idx] = value.get<double>();
    seen[static_cast<size_t>(idx)] = true;
  }
  for (int i = 0; i < net.size(); ++i)
    if (!seen[static_cast<size_t>(i)])
      throw InputError("state file: missing angle for bus " +
                       std::to_string(net.buses()[static_cast<size_t>(i)].id));
  if (j.contains("velocities")) {
    for (const auto& [key, value] : j["velocities"].items()) {
      const int idx = net.bus_index(std::stoi(key));
      if (idx >= net.generator_count())
        throw InputError("state file: velocity given for load bus " + key);
      s.velocities[idx] = value.get<double>();
    }
  }
  return s;
}

void save_state(const State& s, const PowerNetwork& net,
                const std::string& path) {
  nlohmann::json j;
  j["angles"] = nlohmann::json::object();
  for (int i = 0; i < net.size(); ++i)
    j["angles"][std::to_string(net.buses()[static_cast<size_t>(i)].id)] =
        s.angles[i];
  j["velocities"] = nlohmann::json::object();
  for (int i = 0; i < net.generator_count(); ++i)
    j["velocities"][std::to_string(net.buses()[static_cast<size_t>(i)].id)] =
        s.velocities[i];
  std::ofstream out(path);
  if (!out) throw InputError("cannot write state file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace gridcert
