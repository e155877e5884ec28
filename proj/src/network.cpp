#include "gridcert/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gridcert {

using nlohmann::json;

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Line> lines)
    : buses_(std::move(buses)), lines_(std::move(lines)) {
  std::stable_sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) {
    if (a.kind != b.kind) return a.kind == BusKind::generator;
    return a.id < b.id;
  });
  for (auto& ln : lines_) {
    if (ln.from > ln.to) std::swap(ln.from, ln.to);
  }
  std::sort(lines_.begin(), lines_.end(), [](const Line& a, const Line& b) {
    return std::pair(a.from, a.to) < std::pair(b.from, b.to);
  });
  num_generators_ = static_cast<int>(std::count_if(
      buses_.begin(), buses_.end(),
      [](const Bus& b) { return b.kind == BusKind::generator; }));
  validate();
}

int PowerNetwork::bus_index(int id) const {
  for (int i = 0; i < size(); ++i)
    if (buses_[i].id == id) return i;
  throw InputError("unknown bus id " + std::to_string(id));
}

std::optional<int> PowerNetwork::find_line(int from, int to) const {
  if (from > to) std::swap(from, to);
  for (int e = 0; e < line_count(); ++e)
    if (lines_[e].from == from && lines_[e].to == to) return e;
  return std::nullopt;
}

int PowerNetwork::line_index(int from, int to) const {
  auto e = find_line(from, to);
  if (!e)
    throw InputError("no line {" + std::to_string(from) + "," +
                     std::to_string(to) + "} in network");
  return *e;
}

Eigen::VectorXd PowerNetwork::coupling_coefficients() const {
  Eigen::VectorXd a(line_count());
  for (int e = 0; e < line_count(); ++e) {
    const Line& ln = lines_[e];
    a[e] = bus(ln.from).voltage * bus(ln.to).voltage * ln.susceptance;
  }
  return a;
}

PowerNetwork PowerNetwork::with_susceptance(int from, int to, double value) const {
  int e = line_index(from, to);
  auto lines = lines_;
  lines[e].susceptance = value;
  // a temporary value outside a declared adjustable range is a caller bug,
  // not a file error; the range check stays with file ingestion
  lines[e].adjustable = false;
  return PowerNetwork(buses_, std::move(lines));
}

PowerNetwork PowerNetwork::without_line(int from, int to) const {
  int e = line_index(from, to);
  auto lines = lines_;
  lines.erase(lines.begin() + e);
  return PowerNetwork(buses_, std::move(lines));
}

void PowerNetwork::validate() const {
  if (buses_.empty()) throw InputError("network has no buses");
  std::set<int> ids;
  double balance = 0.0;
  for (const Bus& b : buses_) {
    if (!ids.insert(b.id).second)
      throw InputError("duplicate bus id " + std::to_string(b.id));
    if (!(b.voltage > 0))
      throw InputError("bus " + std::to_string(b.id) + ": voltage must be > 0");
    if (!(b.damping > 0))
      throw InputError("bus " + std::to_string(b.id) + ": damping must be > 0");
    if (b.kind == BusKind::generator && !(b.inertia > 0))
      throw InputError("bus " + std::to_string(b.id) + ": inertia must be > 0");
    balance += b.injection;
  }
  std::set<std::pair<int, int>> seen;
  for (const Line& ln : lines_) {
    if (ln.from == ln.to)
      throw InputError("line {" + std::to_string(ln.from) + "," +
                       std::to_string(ln.to) + "}: self-loop");
    if (!ids.count(ln.from) || !ids.count(ln.to))
      throw InputError("line {" + std::to_string(ln.from) + "," +
                       std::to_string(ln.to) + "}: unknown endpoint");
    if (!seen.insert({ln.from, ln.to}).second)
      throw InputError("duplicate line {" + std::to_string(ln.from) + "," +
                       std::to_string(ln.to) + "}");
    if (!(ln.susceptance > 0))
      throw InputError("line {" + std::to_string(ln.from) + "," +
                       std::to_string(ln.to) + "}: susceptance must be > 0");
    if (ln.adjustable &&
        !(ln.min_b <= ln.susceptance && ln.susceptance <= ln.max_b))
      throw InputError("line {" + std::to_string(ln.from) + "," +
                       std::to_string(ln.to) +
                       "}: susceptance outside adjustable bounds");
  }
  if (std::abs(balance) > kBalanceTol) {
    std::ostringstream msg;
    msg << "power imbalance: sum of injections = " << balance
        << " exceeds tolerance " << kBalanceTol;
    throw InputError(msg.str());
  }
  // connectivity by union-find over bus indices
  std::vector<int> parent(size());
  for (int i = 0; i < size(); ++i) parent[i] = i;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Line& ln : lines_) parent[find(bus_index(ln.from))] = find(bus_index(ln.to));
  for (int i = 1; i < size(); ++i)
    if (find(i) != find(0)) throw InputError("network graph is disconnected");
}

namespace {

double require_number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number())
    throw InputError(ctx + ": missing or non-numeric key '" + key + "'");
  return j[key].get<double>();
}

Bus parse_bus(const json& j) {
  if (!j.is_object()) throw InputError("bus entry is not an object");
  static const std::set<std::string> allowed = {"id",      "kind",    "voltage",
                                                "inertia", "damping", "injection"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw InputError("bus entry: unknown key '" + it.key() + "'");
  Bus b;
  if (!j.contains("id") || !j["id"].is_number_integer())
    throw InputError("bus entry: missing integer 'id'");
  b.id = j["id"].get<int>();
  const std::string ctx = "bus " + std::to_string(b.id);
  if (!j.contains("kind") || !j["kind"].is_string())
    throw InputError(ctx + ": missing string 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "generator")
    b.kind = BusKind::generator;
  else if (kind == "load")
    b.kind = BusKind::load;
  else
    throw InputError(ctx + ": kind must be 'generator' or 'load'");
  b.voltage = require_number(j, "voltage", ctx);
  b.damping = require_number(j, "damping", ctx);
  b.injection = require_number(j, "injection", ctx);
  if (b.kind == BusKind::generator)
    b.inertia = require_number(j, "inertia", ctx);
  else if (j.contains("inertia"))
    throw InputError(ctx + ": 'inertia' not allowed on a load bus");
  return b;
}

Line parse_line(const json& j) {
  if (!j.is_object()) throw InputError("line entry is not an object");
  static const std::set<std::string> allowed = {"from", "to",  "susceptance",
                                                "adjustable", "min", "max"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw InputError("line entry: unknown key '" + it.key() + "'");
  Line ln;
  if (!j.contains("from") || !j["from"].is_number_integer() ||
      !j.contains("to") || !j["to"].is_number_integer())
    throw InputError("line entry: missing integer 'from'/'to'");
  ln.from = j["from"].get<int>();
  ln.to = j["to"].get<int>();
  const std::string ctx =
      "line {" + std::to_string(ln.from) + "," + std::to_string(ln.to) + "}";
  ln.susceptance = require_number(j, "susceptance", ctx);
  if (j.contains("adjustable")) {
    if (!j["adjustable"].is_boolean())
      throw InputError(ctx + ": 'adjustable' must be boolean");
    ln.adjustable = j["adjustable"].get<bool>();
  }
  if (ln.adjustable) {
    ln.min_b = require_number(j, "min", ctx);
    ln.max_b = require_number(j, "max", ctx);
  } else if (j.contains("min") || j.contains("max")) {
    throw InputError(ctx + ": 'min'/'max' only allowed with adjustable=true");
  }
  return ln;
}

}  // namespace

PowerNetwork parse_network(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("network file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("network file: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "buses" && it.key() != "lines")
      throw InputError("network file: unknown top-level key '" + it.key() + "'");
  if (!j.contains("buses") || !j["buses"].is_array())
    throw InputError("network file: missing 'buses' list");
  if (!j.contains("lines") || !j["lines"].is_array())
    throw InputError("network file: missing 'lines' list");
  std::vector<Bus> buses;
  for (const auto& jb : j["buses"]) buses.push_back(parse_bus(jb));
  std::vector<Line> lines;
  for (const auto& jl : j["lines"]) lines.push_back(parse_line(jl));
  return PowerNetwork(std::move(buses), std::move(lines));
}

PowerNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open network file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_network(ss.str());
}

}  // namespace gridcert
