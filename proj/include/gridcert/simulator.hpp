#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridcert/certifier.hpp"
#include "gridcert/network.hpp"
#include "gridcert/state.hpp"

namespace gridcert {

/// One simulated contingency: optional fault phase (tripped line, tuned
/// susceptances) on [0, clearing_time), base network afterwards.
struct ScenarioSpec {
  PowerNetwork base_net;
  std::optional<std::pair<int, int>> tripped_line;
  std::map<std::pair<int, int>, double> tuned_susceptances;  // fault-on only
  double clearing_time = 0.0;  // seconds; may be 0 (fault cleared immediately)
  double t_end = 10.0;
  double dt = 1e-3;

  bool has_fault_phase() const {
    return tripped_line.has_value() || !tuned_susceptances.empty();
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<double> lyapunov;  // empty unless a certificate was supplied
  std::optional<int> phase_mark;  // sample index of the fault-on -> post switch
  bool diverged = false;
};

/// Right-hand side of the structure-preserving swing dynamics:
/// generators m_k w' = P_k - d_k w - flow, loads d_k delta' = P_k - flow.
State rhs(const PowerNetwork& net, const State& s);

/// Classical fixed-step 4th-order integration with exact phase switching at
/// the clearing time (a sample always lands on it). Tuned susceptances and
/// the line trip apply only during the fault phase; the base network is
/// restored afterwards. Divergence truncates the trajectory and sets a flag.
/// When a certificate and its equilibrium are supplied, V(x) is recorded at
/// every sample (deviation taken from `equilibrium`).
Trajectory simulate(const ScenarioSpec& spec, const State& x0,
                    const Certificate* cert = nullptr,
                    const State* equilibrium = nullptr);

/// State at t = clearing_time exactly. Errors when the scenario had no fault
/// phase or the trajectory diverged before the clearing time.
State fault_cleared_state(const ScenarioSpec& spec, const Trajectory& traj);

/// Convergence declaration: max |delta_kj - delta*_kj| < angle_tol and max
/// generator |omega| < vel_tol on every sample of the trailing hold window.
bool converged_to(const Trajectory& traj, const PowerNetwork& net,
                  const State& equilibrium, double angle_tol = 1e-3,
                  double vel_tol = 1e-4, double hold = 1.0);

/// CSV export: header t,delta_1..delta_n,omega_1..omega_m,V
/// (V column blank when no Lyapunov trace is present).
void write_trajectory_csv(const Trajectory& traj, const PowerNetwork& net,
                          const std::string& path);

}  // namespace gridcert
