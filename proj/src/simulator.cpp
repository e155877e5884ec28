#include "gridcert/simulator.hpp"

#include <cmath>
#include <fstream>

namespace gridcert {

State rhs(const PowerNetwork& net, const State& s) {
  const int n = net.size();
  const int m = net.generator_count();
  const Eigen::VectorXd a = net.coupling_coefficients();
  Eigen::VectorXd mismatch(n);
  for (int i = 0; i < n; ++i) mismatch[i] = net.buses()[i].injection;
  for (int e = 0; e < net.line_count(); ++e) {
    const Line& ln = net.lines()[e];
    const int k = net.bus_index(ln.from);
    const int j = net.bus_index(ln.to);
    const double flow = a[e] * std::sin(s.angles[k] - s.angles[j]);
    mismatch[k] -= flow;
    mismatch[j] += flow;
  }
  State d;
  d.angles.resize(n);
  d.velocities.resize(m);
  for (int i = 0; i < m; ++i) {
    const Bus& b = net.buses()[i];
    d.angles[i] = s.velocities[i];
    d.velocities[i] = (mismatch[i] - b.damping * s.velocities[i]) / b.inertia;
  }
  for (int i = m; i < n; ++i)
    d.angles[i] = mismatch[i] / net.buses()[i].damping;
  return d;
}

namespace {

State rk4_step(const PowerNetwork& net, const State& s, double h) {
  auto axpy = [](const State& base, const State& k, double c) {
    return State{base.angles + c * k.angles, base.velocities + c * k.velocities};
  };
  const State k1 = rhs(net, s);
  const State k2 = rhs(net, axpy(s, k1, 0.5 * h));
  const State k3 = rhs(net, axpy(s, k2, 0.5 * h));
  const State k4 = rhs(net, axpy(s, k3, h));
  State out = s;
  out.angles += (h / 6.0) * (k1.angles + 2 * k2.angles + 2 * k3.angles + k4.angles);
  out.velocities +=
      (h / 6.0) * (k1.velocities + 2 * k2.velocities + 2 * k3.velocities +
                   k4.velocities);
  return out;
}

double lyapunov_value(const Certificate& cert, const State& equilibrium,
                      const PowerNetwork& net, const State& s) {
  const int n = net.size();
  const int m = net.generator_count();
  Eigen::VectorXd x(n + m);
  x.head(m) = s.angles.head(m) - equilibrium.angles.head(m);
  x.segment(m, m) = s.velocities;
  x.tail(n - m) = s.angles.tail(n - m) - equilibrium.angles.tail(n - m);
  return x.dot(cert.P * x);
}

}  // namespace

Trajectory simulate(const ScenarioSpec& spec, const State& x0,
                    const Certificate* cert, const State* equilibrium) {
  if (spec.dt <= 0) throw InputError("simulate: dt must be positive");
  if (spec.has_fault_phase() && spec.clearing_time > 0.0 &&
      spec.dt > spec.clearing_time / 10.0)
    throw InputError("simulate: dt must be <= clearing_time/10");
  if (spec.clearing_time < 0.0)
    throw InputError("simulate: clearing_time must be >= 0");
  if (x0.angles.size() != spec.base_net.size() ||
      x0.velocities.size() != spec.base_net.generator_count())
    throw InputError("simulate: initial state has wrong dimensions");

  PowerNetwork fault_net = spec.base_net;
  if (spec.has_fault_phase()) {
    for (const auto& [edge, value] : spec.tuned_susceptances)
      fault_net = fault_net.with_susceptance(edge.first, edge.second, value);
    if (spec.tripped_line)
      fault_net = fault_net.without_line(spec.tripped_line->first,
                                         spec.tripped_line->second);
  }

  Trajectory traj;
  const bool with_v = cert != nullptr && equilibrium != nullptr;
  auto record = [&](double t, const State& s) {
    traj.times.push_back(t);
    traj.states.push_back(s);
    if (with_v)
      traj.lyapunov.push_back(lyapunov_value(*cert, *equilibrium, spec.base_net, s));
  };

  double t = 0.0;
  State s = x0;
  record(t, s);
  const double tau = spec.has_fault_phase() ? spec.clearing_time : 0.0;
  if (spec.has_fault_phase() && tau == 0.0) traj.phase_mark = 0;
  while (t < spec.t_end - 1e-12) {
    double h = std::min(spec.dt, spec.t_end - t);
    const bool in_fault = spec.has_fault_phase() && t < tau - 1e-12;
    if (in_fault && t + h > tau) h = tau - t;  // land exactly on the switch
    s = rk4_step(in_fault ? fault_net : spec.base_net, s, h);
    t += h;
    if (!s.finite()) {
      traj.diverged = true;
      break;
    }
    record(t, s);
    if (spec.has_fault_phase() && !traj.phase_mark && t >= tau - 1e-12)
      traj.phase_mark = static_cast<int>(traj.times.size()) - 1;
  }
  return traj;
}

State fault_cleared_state(const ScenarioSpec& spec, const Trajectory& traj) {
  if (!spec.has_fault_phase())
    throw InputError("fault_cleared_state: scenario has no fault phase");
  if (!traj.phase_mark)
    throw NumericalError(
        "fault_cleared_state: trajectory ended before the clearing time");
  return traj.states[static_cast<size_t>(*traj.phase_mark)];
}

bool converged_to(const Trajectory& traj, const PowerNetwork& net,
                  const State& equilibrium, double angle_tol, double vel_tol,
                  double hold) {
  if (traj.diverged || traj.times.size() < 2) return false;
  const double t_start = traj.times.back() - hold;
  if (t_start < traj.times.front()) return false;
  for (size_t k = 0; k < traj.times.size(); ++k) {
    if (traj.times[k] < t_start) continue;
    const State& s = traj.states[k];
    for (const Line& ln : net.lines()) {
      const int i = net.bus_index(ln.from);
      const int j = net.bus_index(ln.to);
      const double diff = (s.angles[i] - s.angles[j]) -
                          (equilibrium.angles[i] - equilibrium.angles[j]);
      if (std::abs(diff) >= angle_tol) return false;
    }
    if (s.velocities.size() > 0 &&
        s.velocities.cwiseAbs().maxCoeff() >= vel_tol)
      return false;
  }
  return true;
}

void write_trajectory_csv(const Trajectory& traj, const PowerNetwork& net,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trajectory file: " + path);
  out.precision(17);
  out << "t";
  for (int i = 0; i < net.size(); ++i) out << ",delta_" << net.buses()[i].id;
  for (int i = 0; i < net.generator_count(); ++i)
    out << ",omega_" << net.buses()[i].id;
  out << ",V\n";
  for (size_t k = 0; k < traj.times.size(); ++k) {
    out << traj.times[k];
    for (int i = 0; i < net.size(); ++i) out << "," << traj.states[k].angles[i];
    for (int i = 0; i < net.generator_count(); ++i)
      out << "," << traj.states[k].velocities[i];
    out << ",";
    if (!traj.lyapunov.empty()) out << traj.lyapunov[k];
    out << "\n";
  }
}

}  // namespace gridcert
