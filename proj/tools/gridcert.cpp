// Command-line surface for the certification / emergency-design pipeline.
// Exit codes: 0 success, 1 input error, 2 numerical failure.

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridcert/certifier.hpp"
#include "gridcert/faulton.hpp"
#include "gridcert/network.hpp"
#include "gridcert/postfault.hpp"
#include "gridcert/powerflow.hpp"
#include "gridcert/simulator.hpp"
#include "gridcert/system_matrices.hpp"

namespace {

using namespace gridcert;

std::pair<int, int> parse_pair(const std::string& text) {
  std::istringstream in(text);
  int a = 0, b = 0;
  char dash = 0;
  if (!(in >> a >> dash >> b) || dash != '-' || !in.eof())
    throw InputError("expected a bus pair like 1-2, got: " + text);
  return {a, b};
}

std::vector<std::pair<int, int>> parse_pair_list(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_pair(item));
  if (out.empty()) throw InputError("expected at least one bus pair");
  return out;
}

std::vector<std::pair<double, double>> parse_boxes(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream box(item);
    double lo = 0.0, hi = 0.0;
    char colon = 0;
    if (!(box >> lo >> colon >> hi) || colon != ':' || !box.eof())
      throw InputError("expected a box like 0.4:1.0, got: " + item);
    out.push_back({lo, hi});
  }
  if (out.empty()) throw InputError("expected at least one box");
  return out;
}

State equilibrium_state(const PowerNetwork& net, const EquilibriumResult& eq) {
  State s;
  s.angles = eq.angles;
  s.velocities = Eigen::VectorXd::Zero(net.generator_count());
  return s;
}

void cmd_equilibrium(const std::string& network) {
  const PowerNetwork net = load_network(network);
  const EquilibriumResult eq = solve_equilibrium(net);
  std::printf("angles (rad, bus 1 pinned to 0):\n");
  for (int i = 0; i < net.size(); ++i)
    std::printf("  bus %d: % .6f\n", net.buses()[static_cast<size_t>(i)].id,
                eq.angles[i]);
  std::printf("pairwise differences:\n");
  for (const Line& ln : net.lines())
    std::printf("  delta_%d%d: % .6f\n", ln.from, ln.to,
                eq.angles[net.bus_index(ln.from)] -
                    eq.angles[net.bus_index(ln.to)]);
  std::printf("residual: %.3e\niterations: %d\nin_polytope: %s\n", eq.residual,
              eq.iterations, eq.in_polytope ? "true" : "false");
}

void cmd_certify(const std::string& network, std::optional<double> gamma,
                 const std::string& import_p, const std::string& out_path) {
  const PowerNetwork net = load_network(network);
  const EquilibriumResult eq = solve_equilibrium(net);
  const SystemMatrices mats = assemble_matrices(net, equilibrium_state(net, eq));

  Certificate cert;
  if (!import_p.empty()) {
    cert = load_certificate(import_p);
    if (cert.P.rows() != mats.state_dim())
      throw InputError("imported matrix has wrong dimension for this network");
    cert.g = gamma ? sector_gain_uniform(*gamma)
                   : sector_gain(mats.eq_angle_diffs);
    cert.gamma = gamma ? *gamma : std::numeric_limits<double>::quiet_NaN();
    cert.v_min = compute_vmin(cert.P, mats, net);
  } else {
    cert = certify(net, mats, gamma);
  }

  const AffineLMI lmi = build_lmi5(mats, cert.g);
  const std::vector<double> witness = check_solution(lmi, sym_to_vec(cert.P));
  const double scale = std::max(1.0, lmi.nsd.assemble(sym_to_vec(cert.P))
                                         .cwiseAbs()
                                         .maxCoeff());
  std::printf("g: %.6f\nV_min: %.6f\n", cert.g, cert.v_min);
  std::printf("lambda_max (stability block): %.3e  (relative: %.3e)\n",
              witness[0], witness[0] / scale);
  std::printf("lambda_max (P >= eps I, <= orientation): %.3e\n", witness[1]);
  if (!out_path.empty()) {
    save_certificate(cert, out_path);
    std::printf("certificate written to %s\n", out_path.c_str());
  }
}

void cmd_design_faulton(const std::string& network,
                        const std::vector<std::string>& trips,
                        const std::string& lines, double bound_pct,
                        double clearing, const std::string& mode_name,
                        const std::string& cert_path,
                        const std::string& out_path, unsigned int seed,
                        int jobs) {
  const PowerNetwork net = load_network(network);
  const EquilibriumResult eq = solve_equilibrium(net);
  const SystemMatrices mats = assemble_matrices(net, equilibrium_state(net, eq));
  const Certificate cert = cert_path.empty() ? certify(net, mats)
                                             : load_certificate(cert_path);

  std::vector<AdjustableLine> adjustable;
  for (const auto& [from, to] : parse_pair_list(lines)) {
    const double b =
        net.lines()[static_cast<size_t>(net.line_index(from, to))].susceptance;
    adjustable.push_back(
        {from, to, b * (1.0 - bound_pct / 100.0), b * (1.0 + bound_pct / 100.0)});
  }

  FaultOnOptions opts;
  opts.seed = seed;
  if (mode_name == "fixed-matrix")
    opts.mode = DesignMode::fixed_matrix;
  else if (mode_name == "fixed-susceptance")
    opts.mode = DesignMode::fixed_susceptance;
  else
    throw InputError("unknown mode: " + mode_name +
                     " (expected fixed-matrix or fixed-susceptance)");

  std::vector<std::pair<int, int>> trip_pairs;
  for (const std::string& t : trips) trip_pairs.push_back(parse_pair(t));

  // independent contingencies fan out across jobs; results keep input order
  std::vector<FaultOnDesign> designs(trip_pairs.size());
  for (size_t base = 0; base < trip_pairs.size();
       base += static_cast<size_t>(std::max(1, jobs))) {
    std::vector<std::future<FaultOnDesign>> batch;
    const size_t end = std::min(trip_pairs.size(),
                                base + static_cast<size_t>(std::max(1, jobs)));
    for (size_t i = base; i < end; ++i)
      batch.push_back(std::async(std::launch::async, [&, i] {
        return design_faulton(net, mats, cert, trip_pairs[i], adjustable,
                              clearing, opts);
      }));
    for (size_t i = base; i < end; ++i) designs[i] = batch[i - base].get();
  }

  for (size_t i = 0; i < designs.size(); ++i) {
    const FaultOnDesign& d = designs[i];
    std::printf("trip %d-%d: mu = %.4f, mode = %s, margin = %.3e\n",
                d.tripped->first, d.tripped->second, d.mu, mode_name.c_str(),
                d.margin);
    for (const auto& [edge, value] : d.tuned)
      std::printf("  B_%d%d = %.4f\n", edge.first, edge.second, value);
    std::string path = out_path;
    if (designs.size() > 1) {
      const std::string suffix = "-" + std::to_string(d.tripped->first) + "-" +
                                 std::to_string(d.tripped->second) + ".json";
      const auto dot = path.rfind(".json");
      path = dot == std::string::npos ? path + suffix
                                      : path.substr(0, dot) + suffix;
    }
    if (!path.empty()) {
      save_design(d, path);
      std::printf("  design written to %s\n", path.c_str());
    }
  }
}

void cmd_design_postfault(const std::string& network,
                          const std::string& state_path,
                          const std::string& lines, const std::string& boxes,
                          const std::string& out_path,
                          const std::string& cert_out) {
  const PowerNetwork net = load_network(network);
  const State x0 = load_state(state_path, net);

  const auto pairs = parse_pair_list(lines);
  const auto bounds = parse_boxes(boxes);
  if (pairs.size() != bounds.size())
    throw InputError("--lines and --boxes must have the same length");
  std::vector<AdjustableLine> adjustable;
  for (size_t i = 0; i < pairs.size(); ++i)
    adjustable.push_back(
        {pairs[i].first, pairs[i].second, bounds[i].first, bounds[i].second});

  const PostFaultDesign design = design_postfault(net, x0, adjustable);
  for (const auto& [edge, value] : design.tuned)
    std::printf("B_%d%d = %.6f\n", edge.first, edge.second, value);
  std::printf("tuned equilibrium (bus 1 pinned):\n");
  for (int i = 0; i < net.size(); ++i)
    std::printf("  bus %d: % .6f\n", net.buses()[static_cast<size_t>(i)].id,
                design.equilibrium.angles[i]);
  PowerNetwork tuned = net;
  for (const auto& [edge, value] : design.tuned)
    tuned = tuned.with_susceptance(edge.first, edge.second, value);
  State eqs = equilibrium_state(net, design.equilibrium);
  const SystemMatrices mats = assemble_matrices(tuned, eqs);
  const Eigen::VectorXd dev = mats.deviation(tuned, x0, eqs);
  std::printf("V(x0): %.6f\nV_min: %.6f\ncontained: %s\nadapt rounds: %d\n",
              dev.dot(design.certificate.P * dev), design.certificate.v_min,
              design.contained ? "true" : "false", design.adapt_rounds);
  if (!out_path.empty()) {
    save_postfault_design(design, net, out_path);
    std::printf("design written to %s\n", out_path.c_str());
  }
  if (!cert_out.empty()) {
    save_certificate(design.certificate, cert_out);
    std::printf("certificate written to %s\n", cert_out.c_str());
  }
}

void cmd_simulate(const std::string& network, const std::string& design_path,
                  const std::string& x0_path, double clearing, double dt,
                  double t_end, const std::string& out_path,
                  const std::string& cert_path, const std::string& plot_path) {
  const PowerNetwork net = load_network(network);

  ScenarioSpec spec{net, std::nullopt, {}, clearing, t_end, dt};
  if (!design_path.empty()) {
    const FaultOnDesign d = load_design(design_path);
    spec.tripped_line = d.tripped;
    spec.tuned_susceptances = d.tuned;
  }

  const EquilibriumResult eq = solve_equilibrium(net);
  const State eq_state = equilibrium_state(net, eq);
  const State x0 = x0_path.empty() ? eq_state : load_state(x0_path, net);

  std::optional<Certificate> cert;
  if (!cert_path.empty()) cert = load_certificate(cert_path);

  const Trajectory traj = simulate(spec, x0, cert ? &*cert : nullptr,
                                   cert ? &eq_state : nullptr);
  if (!out_path.empty()) write_trajectory_csv(traj, net, out_path);
  std::printf("samples: %zu\ndiverged: %s\n", traj.times.size(),
              traj.diverged ? "true" : "false");
  if (!traj.lyapunov.empty())
    std::printf("V(0) = %.6e, V(end) = %.6e\n", traj.lyapunov.front(),
                traj.lyapunov.back());

  if (!plot_path.empty()) {
    if (traj.lyapunov.empty())
      throw InputError("--plot-out needs --lyapunov to produce a (t, V) series");
    std::ofstream plot(plot_path);
    if (!plot) throw InputError("cannot write plot file: " + plot_path);
    plot.precision(17);
    plot << "t,V\n";
    const size_t stride = std::max<size_t>(1, traj.times.size() / 500);
    for (size_t k = 0; k < traj.times.size(); k += stride)
      plot << traj.times[k] << "," << traj.lyapunov[k] << "\n";
    if ((traj.times.size() - 1) % stride != 0)
      plot << traj.times.back() << "," << traj.lyapunov.back() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient stability certification and emergency susceptance "
               "design for lossless structure-preserving networks"};
  app.require_subcommand(1);
  unsigned int seed = 0;
  int jobs = 1;
  app.add_option("--seed", seed, "random restart stream")->capture_default_str();
  app.add_option("--jobs", jobs, "parallel contingency designs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string network, import_p, cert_path, out_path, cert_out, lines, boxes;
  std::string state_path, design_path, x0_path, plot_path, mode = "fixed-matrix";
  std::vector<std::string> trips;
  double gamma_value = 0.0, bound_pct = 50.0, clearing = 0.1;
  double sim_clearing = 0.0, dt = 1e-3, t_end = 10.0;
  bool from_equilibrium = false;

  auto* eq_cmd = app.add_subcommand("equilibrium", "solve for the equilibrium");
  eq_cmd->add_option("--network", network)->required();
  eq_cmd->callback([&] { cmd_equilibrium(network); });

  auto* cert_cmd = app.add_subcommand("certify", "synthesize or check a "
                                                 "stability certificate");
  cert_cmd->add_option("--network", network)->required();
  auto* gamma_opt = cert_cmd->add_option("--gamma", gamma_value,
                                         "uniform angle bound for the sector gain");
  auto* fromeq_opt = cert_cmd->add_flag("--from-equilibrium", from_equilibrium,
                                        "per-edge sector gain (default)");
  gamma_opt->excludes(fromeq_opt);
  cert_cmd->add_option("--import-P", import_p,
                       "check an existing matrix instead of solving");
  cert_cmd->add_option("--out", out_path, "certificate output file");
  cert_cmd->callback([&] {
    cmd_certify(network,
                gamma_opt->count() ? std::optional<double>(gamma_value)
                                   : std::nullopt,
                import_p, out_path);
  });

  auto* fo_cmd = app.add_subcommand("design-faulton",
                                    "emergency susceptances for the fault-on phase");
  fo_cmd->add_option("--network", network)->required();
  fo_cmd->add_option("--trip", trips, "tripped line, e.g. 1-3 (repeatable)")
      ->required();
  fo_cmd->add_option("--lines", lines, "adjustable lines, e.g. 1-2,2-3")
      ->required();
  fo_cmd->add_option("--bound-pct", bound_pct, "box half-width in percent")
      ->capture_default_str();
  fo_cmd->add_option("--clearing", clearing, "clearing time in seconds")
      ->capture_default_str();
  fo_cmd->add_option("--mode", mode, "fixed-matrix | fixed-susceptance")
      ->capture_default_str();
  fo_cmd->add_option("--cert", cert_path, "reuse a certificate file");
  fo_cmd->add_option("--out", out_path, "design output file");
  fo_cmd->callback([&] {
    cmd_design_faulton(network, trips, lines, bound_pct, clearing, mode,
                       cert_path, out_path, seed, jobs);
  });

  auto* pf_cmd = app.add_subcommand("design-postfault",
                                    "post-fault susceptances and adapted "
                                    "certificate for a fault-cleared state");
  pf_cmd->add_option("--network", network)->required();
  pf_cmd->add_option("--state", state_path, "fault-cleared state file")
      ->required();
  pf_cmd->add_option("--lines", lines, "adjustable lines, e.g. 1-2,2-3")
      ->required();
  pf_cmd->add_option("--boxes", boxes, "boxes, e.g. 0.4:1,0.6:1.8")->required();
  pf_cmd->add_option("--out", out_path, "design output file");
  pf_cmd->add_option("--cert-out", cert_out, "adapted certificate output file");
  pf_cmd->callback([&] {
    cmd_design_postfault(network, state_path, lines, boxes, out_path, cert_out);
  });

  auto* sim_cmd = app.add_subcommand("simulate", "integrate a contingency "
                                                 "scenario");
  sim_cmd->add_option("--network", network)->required();
  sim_cmd->add_option("--design", design_path, "fault-on design file");
  sim_cmd->add_option("--x0", x0_path, "initial state file (default: equilibrium)");
  sim_cmd->add_option("--clearing", sim_clearing, "clearing time in seconds")
      ->capture_default_str();
  sim_cmd->add_option("--dt", dt)->capture_default_str();
  sim_cmd->add_option("--t-end", t_end)->capture_default_str();
  sim_cmd->add_option("--out", out_path, "trajectory CSV");
  sim_cmd->add_option("--lyapunov", cert_path,
                      "certificate file; records V along the trajectory");
  sim_cmd->add_option("--plot-out", plot_path, "downsampled (t, V) CSV");
  sim_cmd->callback([&] {
    cmd_simulate(network, design_path, x0_path, sim_clearing, dt, t_end,
                 out_path, cert_path, plot_path);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const gridcert::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gridcert::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
