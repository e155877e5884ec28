#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridcert/errors.hpp"

namespace gridcert {

enum class BusKind { generator, load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::generator;
  double voltage = 1.0;    // per-unit magnitude, > 0
  double inertia = 0.0;    // generators only, > 0
  double damping = 0.0;    // > 0
  double injection = 0.0;  // P_k: mechanical power for generators, -load for loads
};

struct Line {
  int from = 0;  // stored with from < to (unordered pair)
  int to = 0;
  double susceptance = 0.0;  // per-unit, > 0
  bool adjustable = false;
  double min_b = 0.0;  // valid when adjustable
  double max_b = 0.0;
};

/// Immutable bus/line model of a lossless network. Buses are ordered
/// generators first, then loads; lines are ordered lexicographically by
/// (min id, max id). That edge order is shared by every matrix assembly.
class PowerNetwork {
 public:
  static constexpr double kBalanceTol = 1e-6;

  PowerNetwork(std::vector<Bus> buses, std::vector<Line> lines);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }

  int size() const { return static_cast<int>(buses_.size()); }
  int generator_count() const { return num_generators_; }
  int load_count() const { return size() - num_generators_; }
  int line_count() const { return static_cast<int>(lines_.size()); }

  /// Bus position in the canonical (generators-first) ordering.
  int bus_index(int id) const;
  const Bus& bus(int id) const { return buses_[bus_index(id)]; }

  /// Edge position in the canonical edge order; throws InputError if absent.
  int line_index(int from, int to) const;
  std::optional<int> find_line(int from, int to) const;

  /// a_kj = V_k V_j B_kj, one entry per line in edge order.
  Eigen::VectorXd coupling_coefficients() const;

  /// Copy with one line's susceptance replaced (validation re-run).
  PowerNetwork with_susceptance(int from, int to, double value) const;
  /// Copy with one line removed; the result must stay connected.
  PowerNetwork without_line(int from, int to) const;

 private:
  void validate() const;

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  int num_generators_ = 0;
};

/// Parse and validate a network file (see README for the schema).
/// Distinct diagnostics for schema violations, disconnected graphs and
/// power imbalance beyond 1e-6 p.u.
PowerNetwork load_network(const std::string& path);
PowerNetwork parse_network(const std::string& json_text);

}  // namespace gridcert
