// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 parse or configuration error, 3 no feasible design or control.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cms/cms.hpp"

namespace {

using namespace cms;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> n_v, n_f, samples, starts;
  std::optional<unsigned> threads;
  std::vector<int> timesteps;
  bool no_obbt = false;
  std::string out;
};

// A .ini/.cfg argument is a run config; anything else is taken as an INP
// network with default settings.
RunConfig config_for(const std::string& input, const Overrides& o) {
  const auto ext = std::filesystem::path(input).extension().string();
  RunConfig c;
  if (ext == ".ini" || ext == ".cfg")
    c = load_config(input);
  else
    c.network = input;
  if (o.seed) c.seed = *o.seed;
  if (o.n_v) c.n_v = *o.n_v;
  if (o.n_f) c.n_f = *o.n_f;
  if (o.samples) c.samples = *o.samples;
  if (o.starts) c.starts = *o.starts;
  if (o.threads) c.threads = *o.threads;
  if (!o.timesteps.empty()) c.timesteps = o.timesteps;
  if (o.no_obbt) c.obbt = false;
  if (!o.out.empty()) c.out_dir = o.out;
  validate(c);
  return c;
}

void add_run_options(CLI::App* cmd, Overrides& o, bool design) {
  cmd->add_option("--seed", o.seed, "root random seed");
  cmd->add_option("--out", o.out, "directory for result files");
  cmd->add_option("--threads", o.threads, "worker threads (0: all cores)");
  cmd->add_option("--timesteps", o.timesteps, "pattern periods to snapshot")->delimiter(',');
  cmd->add_option("--starts", o.starts, "multi-start count M");
  if (!design) return;
  cmd->add_option("--nv", o.n_v, "number of new DBVs");
  cmd->add_option("--nf", o.n_f, "number of AFVs");
  cmd->add_option("--samples", o.samples, "sampled designs N (0: by network size)");
  cmd->add_flag("--no-obbt", o.no_obbt, "skip bound tightening");
}

void write_json(const std::string& dir, const std::string& name, const nlohmann::json& j) {
  std::filesystem::create_directories(dir);
  std::ofstream f(std::filesystem::path(dir) / name);
  if (!f) throw Error("cannot write " + name + " in " + dir);
  f << j.dump(2) << '\n';
}

int cmd_stats(const RunConfig& c) {
  const auto net = load_network(c);
  const auto fc = forest_core(net);
  const auto ps = problem_stats(net, net.n_t());
  int prv = 0, dbv = 0;
  for (const auto& l : net.links) {
    prv += l.is_existing_prv;
    dbv += l.is_existing_dbv;
  }
  const nlohmann::json j = {{"links", net.n_p()},
                            {"demand_nodes", net.n_n()},
                            {"sources", net.n_0()},
                            {"timesteps", net.n_t()},
                            {"existing_prvs", prv},
                            {"existing_dbvs", dbv},
                            {"core_links", fc.core_links.size()},
                            {"forest_links", fc.forest_links.size()},
                            {"continuous_variables", ps.continuous},
                            {"binary_variables", ps.binary},
                            {"nonconvex_constraints", ps.nonconvex}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& c) {
  const auto net = load_network(c);
  const auto hp = headloss_params(net);
  const auto sp = make_scc_params(net, c.rho, c.u_min);
  const auto states = simulate_uncontrolled(net, hp);
  nlohmann::json steps = nlohmann::json::array();
  for (int t = 0; t < net.n_t(); ++t)
    steps.push_back({{"t", t},
                     {"newton_iterations", states[t].iterations},
                     {"mass_residual", mass_residual(net, states[t], t)},
                     {"energy_residual", energy_residual(net, hp, states[t], t)}});
  const nlohmann::json j = {{"scc_smooth", scc_smooth(states, net, sp)},
                            {"scc_indicator", scc_indicator(states, net, sp)},
                            {"azp_m", azp(states, net)},
                            {"timesteps", steps}};
  std::cout << j.dump(2) << '\n';
  if (!c.out_dir.empty()) {
    write_json(c.out_dir, "simulation.json", j);
    std::ofstream cdf(std::filesystem::path(c.out_dir) / "velocity_cdf.csv");
    write_velocity_cdf(cdf, velocity_cdf(states, net, sp), net);
  }
  return 0;
}

int cmd_control(const RunConfig& c) {
  const auto net = load_network(c);
  const auto r = run_control_only(net, c);
  std::cout << "control-only SCC " << r.control.f << " (indicator " << r.scc_indicator << "), uncontrolled "
            << r.uncontrolled << ", AZP " << r.azp << " m\n";
  if (!c.out_dir.empty()) write_outputs(c.out_dir, r, net, make_scc_params(net, c.rho, c.u_min));
  return 0;
}

int cmd_design(const RunConfig& c) {
  const auto net = load_network(c);
  const auto s = run_cms(net, c);
  int feasible = 0;
  for (const auto& cand : s.candidates) feasible += cand.feasible;
  std::cout << "best design SCC " << s.scc_smooth << " (indicator " << s.scc_indicator << "), LP bound " << s.lp_bound
            << ", control-only " << s.control_only << ", uncontrolled " << s.uncontrolled << '\n'
            << feasible << " of " << s.candidates.size() << " candidates feasible; DBVs:";
  for (int j : s.best.dbv_links) std::cout << ' ' << net.links[j].id;
  std::cout << "; AFVs:";
  for (int i : s.best.afv_nodes) std::cout << ' ' << net.nodes[i].id;
  std::cout << "\ntotal " << s.times.total << " s\n";
  if (!c.out_dir.empty()) write_outputs(c.out_dir, s, net);
  return 0;
}

int cmd_obbt(const RunConfig& c) {
  const auto net = load_network(c);
  const auto hp = headloss_params(net);
  const auto sp = make_scc_params(net, c.rho, c.u_min);
  const auto fc = forest_core(net);
  BoundOptions bo;
  bo.u_max = c.u_max;
  bo.p_min = c.p_min;
  bo.alpha_max = c.alpha_max;
  auto b = make_bounds(net, bo);
  apply_forest_bounds(net, fc, c.n_f, b);
  ObbtOptions oo;
  oo.k_max = c.obbt_k_max;
  oo.eps_tol = c.obbt_eps_tol;
  oo.threads = c.threads;
  const auto rep = tighten(net, hp, sp, b, default_design(net, c.n_v, c.n_f), fc, oo);
  const auto j = to_json(rep);
  std::cout << j.dump(2) << '\n';
  if (!c.out_dir.empty()) write_json(c.out_dir, "obbt_report.json", j);
  return 0;
}

int cmd_profile(const std::string& results, const std::string& out) {
  std::ifstream in(results);
  if (!in) throw ParseError("cannot open results file '" + results + "'", 0);
  std::vector<std::string> names;
  const auto f = read_results_csv(in, names);
  const auto p = performance_profile(f, names);
  if (out.empty()) {
    write_profile_csv(std::cout, p);
    return 0;
  }
  std::filesystem::create_directories(out);
  std::ofstream csv(std::filesystem::path(out) / "profile.csv");
  write_profile_csv(csv, p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Valve placement and control for self-cleaning water networks"};
  app.require_subcommand(1);

  std::string input;
  Overrides o;
  auto* stats = app.add_subcommand("stats", "network size and problem dimensions");
  auto* simulate = app.add_subcommand("simulate", "steady-state hydraulics with all valves open");
  auto* control = app.add_subcommand("control", "optimize settings of the existing valves");
  auto* design = app.add_subcommand("design", "place new valves and optimize their settings");
  auto* obbt = app.add_subcommand("obbt", "tighten flow bounds only");
  auto* profile = app.add_subcommand("profile", "performance profile from a results CSV");
  for (auto* cmd : {stats, simulate, control, design, obbt}) {
    cmd->add_option("input", input, "INP network or INI run config")->required();
    add_run_options(cmd, o, cmd == design || cmd == obbt);
  }
  profile->add_option("results", input, "CSV: header of solver names, one row of costs per experiment")->required();
  profile->add_option("--out", o.out, "directory for profile.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (profile->parsed()) return cmd_profile(input, o.out);
    const auto cfg = config_for(input, o);
    if (stats->parsed()) return cmd_stats(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (control->parsed()) return cmd_control(cfg);
    if (design->parsed()) return cmd_design(cfg);
    if (obbt->parsed()) return cmd_obbt(cfg);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ZeroSupport& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
