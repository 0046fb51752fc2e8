#pragma once

// End-to-end pipeline: relax the design problem, sample integer placements
// from the fractional solution, and optimize the controls of each placement.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "cms/control.hpp"
#include "cms/inp.hpp"
#include "cms/obbt.hpp"
#include "cms/relaxation.hpp"
#include "cms/sampler.hpp"
#include "cms/scc.hpp"

namespace cms {

struct RunConfig {
  std::string network;         // INP path
  std::vector<int> timesteps;  // pattern periods; empty picks the peak periods
  int peak_count = 4;

  double rho = 50.0;
  double u_min = 0.2;       // m/s
  double p_min = 15.0;      // m
  double u_max = 3.0;       // m/s
  double alpha_max = 0.025; // m^3/s

  int n_v = 1;
  int n_f = 1;
  int samples = 0;  // N; 0 picks by network size
  bool central = true;  // sample from the centre of the optimal face, not a vertex
  int starts = 5;   // M
  double sfscp_eps_tol = 1e-4;
  int sfscp_k_max = 50;

  bool obbt = true;
  int obbt_k_max = 3;
  double obbt_eps_tol = 0.9;

  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out_dir;  // empty: nothing written
};

inline void validate(const RunConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(c.rho, "rho");
  positive(c.u_min, "u_min");
  positive(c.p_min, "p_min");
  positive(c.u_max, "u_max");
  positive(c.alpha_max, "alpha_max");
  positive(c.sfscp_eps_tol, "control eps_tol");
  positive(c.obbt_eps_tol, "obbt eps_tol");
  if (c.u_max <= c.u_min) throw ValidationError("u_max must exceed u_min");
  if (c.n_v < 0 || c.n_f < 0) throw ValidationError("valve counts must be non-negative");
  if (c.samples < 0) throw ValidationError("samples must be non-negative");
  if (c.starts < 1) throw ValidationError("starts must be at least 1");
  if (c.sfscp_k_max < 1) throw ValidationError("control k_max must be at least 1");
  if (c.obbt_k_max < 0) throw ValidationError("obbt k_max must be non-negative");
  if (c.peak_count < 1) throw ValidationError("peak_count must be at least 1");
}

// INI file with sections [network], [objective], [limits], [design],
// [control], [obbt] and [run]. Unknown keys are rejected so that typos do not
// silently fall back to defaults. Relative network paths resolve against the
// config file's directory.
inline RunConfig load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message() + " in " + e.filename(), static_cast<int>(e.line()));
  }
  static const std::set<std::string> known = {
      "network.inp",      "network.timesteps", "network.peak_count", "objective.rho",   "objective.u_min",
      "limits.p_min",     "limits.u_max",      "limits.alpha_max",   "design.n_v",      "design.n_f",
      "design.samples",   "design.central",    "control.starts",    "control.eps_tol",    "control.k_max",   "obbt.enabled",
      "obbt.k_max",       "obbt.eps_tol",      "run.seed",           "run.threads",     "run.out"};
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ParseError("key '" + section + "' outside a section", 0);
    for (const auto& kv : body)
      if (!known.count(section + "." + kv.first)) throw ParseError("unknown config key '" + section + "." + kv.first + "'", 0);
  }

  RunConfig c;
  // get(key, default) would swallow a malformed value, so convert explicitly.
  auto read = [&](const std::string& key, auto& v) {
    const auto raw = tree.get_optional<std::string>(key);
    if (!raw) return;
    const auto parsed = tree.get_optional<std::decay_t<decltype(v)>>(key);
    if (!parsed) throw ParseError("bad value '" + *raw + "' for " + key, 0);
    v = *parsed;
  };
  read("network.inp", c.network);
  if (auto ts = tree.get_optional<std::string>("network.timesteps"); ts && !boost::trim_copy(*ts).empty()) {
    std::vector<std::string> parts;
    boost::split(parts, *ts, boost::is_any_of(", "), boost::token_compress_on);
    for (const auto& p : parts) {
      if (p.empty()) continue;
      int v = 0;
      auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
      if (ec != std::errc() || end != p.data() + p.size()) throw ParseError("bad timestep '" + p + "'", 0);
      c.timesteps.push_back(v);
    }
  }
  read("network.peak_count", c.peak_count);
  read("objective.rho", c.rho);
  read("objective.u_min", c.u_min);
  read("limits.p_min", c.p_min);
  read("limits.u_max", c.u_max);
  read("limits.alpha_max", c.alpha_max);
  read("design.n_v", c.n_v);
  read("design.n_f", c.n_f);
  read("design.samples", c.samples);
  read("design.central", c.central);
  read("control.starts", c.starts);
  read("control.eps_tol", c.sfscp_eps_tol);
  read("control.k_max", c.sfscp_k_max);
  read("obbt.enabled", c.obbt);
  read("obbt.k_max", c.obbt_k_max);
  read("obbt.eps_tol", c.obbt_eps_tol);
  read("run.seed", c.seed);
  read("run.threads", c.threads);
  read("run.out", c.out_dir);
  if (!c.network.empty() && std::filesystem::path(c.network).is_relative())
    c.network = (std::filesystem::path(path).parent_path() / c.network).lexically_normal().string();
  validate(c);
  return c;
}

inline NetworkModel load_network(const RunConfig& c) {
  if (c.network.empty()) throw ValidationError("no network file configured");
  std::ifstream in(c.network);
  if (!in) throw ParseError("cannot open network file '" + c.network + "'", 0);
  InpOptions opt;
  opt.timesteps = c.timesteps;
  opt.peak_count = c.peak_count;
  return parse_inp(in, opt);
}

struct StageTimes {
  double parse = 0, bounds = 0, obbt = 0, relaxation = 0, sampling = 0, control = 0, total = 0;
};

struct CandidateRecord {
  CandidateDesign design;
  bool feasible = false;
  double f = 0.0;  // smooth SCC; zero marks an infeasible design
  double f_indicator = 0.0;
  std::string status;
  double seconds = 0.0;
};

struct ControlReport {
  ControlSolution control;
  double uncontrolled = 0.0;   // smooth SCC with every valve open, 0 if outside the limits
  bool uncontrolled_feasible = false;
  double scc_indicator = 0.0;
  double azp = 0.0;
  double seconds = 0.0;
};

struct CmsSolution {
  CandidateDesign best;
  ControlSolution control;  // of the best design
  double scc_smooth = 0.0;
  double scc_indicator = 0.0;
  double azp = 0.0;
  double lp_bound = 0.0;
  double uncontrolled = 0.0;
  double control_only = 0.0;  // existing valves only, same bounds
  std::vector<CdfPoint> velocity_cdf;
  FractionalDesign fractional;
  RelaxationStats relaxation;
  std::optional<ObbtReport> obbt;
  std::vector<CandidateRecord> candidates;
  StageTimes times;
};

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline ControlOptions control_options(const RunConfig& c, std::uint64_t seed, unsigned threads) {
  ControlOptions o;
  o.starts = c.starts;
  o.eps_tol = c.sfscp_eps_tol;
  o.k_max = c.sfscp_k_max;
  o.seed = seed;
  o.threads = threads;
  return o;
}

inline BoundSet run_bounds(const NetworkModel& net, const RunConfig& c, const ForestCoreDecomposition& fc, int n_f) {
  BoundOptions bo;
  bo.u_max = c.u_max;
  bo.p_min = c.p_min;
  bo.alpha_max = c.alpha_max;
  auto b = make_bounds(net, bo);
  apply_forest_bounds(net, fc, n_f, b);
  return b;
}

inline std::pair<double, bool> uncontrolled_scc(const NetworkModel& net, const HeadLossParams& hp, const SccParams& sp,
                                                const BoundSet& b) {
  try {
    const auto states = simulate_uncontrolled(net, hp);
    const bool ok = within_limits(net, b, states, {});
    return {ok ? scc_smooth(states, net, sp) : 0.0, ok};
  } catch (const NonConvergence&) {
    return {0.0, false};
  } catch (const SingularSystem&) {
    return {0.0, false};
  }
}

}  // namespace detail

// Direction enumeration and multi-start on the existing valves only.
inline ControlReport run_control_only(const NetworkModel& net, const RunConfig& cfg) {
  validate(cfg);
  detail::Stopwatch clock;
  const auto hp = headloss_params(net);
  const auto sp = make_scc_params(net, cfg.rho, cfg.u_min);
  const auto fc = forest_core(net);
  const auto b = detail::run_bounds(net, cfg, fc, 0);
  ControlReport r;
  std::tie(r.uncontrolled, r.uncontrolled_feasible) = detail::uncontrolled_scc(net, hp, sp, b);
  r.control = enumerate_dbv_directions(net, hp, sp, b, {}, {}, nullptr,
                                       detail::control_options(cfg, derive_seed(cfg.seed, {3}), cfg.threads));
  r.scc_indicator = scc_indicator(r.control.states, net, sp);
  r.azp = azp(r.control.states, net);
  r.seconds = clock.lap();
  return r;
}

inline ControlReport run_control_only(const RunConfig& cfg) { return run_control_only(load_network(cfg), cfg); }

// Relax, sample, optimize each sampled design, keep the best. Candidates that
// admit no feasible operating point are recorded with f = 0 and skipped.
// Throws InfeasibleError when no candidate is feasible.
inline CmsSolution run_cms(const NetworkModel& net, const RunConfig& cfg, double parse_seconds = 0.0) {
  validate(cfg);
  detail::Stopwatch clock, total;
  CmsSolution out;
  out.times.parse = parse_seconds;

  const auto hp = headloss_params(net);
  const auto sp = make_scc_params(net, cfg.rho, cfg.u_min);
  const auto fc = forest_core(net);
  const auto design = default_design(net, cfg.n_v, cfg.n_f);
  auto b = detail::run_bounds(net, cfg, fc, cfg.n_f);
  out.times.bounds = clock.lap();

  if (cfg.obbt) {
    ObbtOptions oo;
    oo.k_max = cfg.obbt_k_max;
    oo.eps_tol = cfg.obbt_eps_tol;
    oo.threads = cfg.threads;
    out.obbt = tighten(net, hp, sp, b, design, fc, oo);
  }
  out.times.obbt = clock.lap();

  const auto rp = build_lp(net, hp, sp, b, design);
  const auto sol = lp::solve_lp(rp.lp);
  out.lp_bound = lp_bound(sol);
  out.fractional = extract_fractional(cfg.central ? central_solution(rp, sol, design, {}, cfg.threads) : sol, rp.map, design);
  out.relaxation = rp.stats;
  out.times.relaxation = clock.lap();

  const int n_samples = cfg.samples > 0 ? cfg.samples : default_sample_count(net.n_p());
  const auto designs = sample_designs(out.fractional.y, out.fractional.z, cfg.n_v, cfg.n_f, n_samples,
                                      derive_seed(cfg.seed, {1}));
  out.times.sampling = clock.lap();

  // The existing-valve optimum seeds every candidate: new valves at zero loss
  // are transparent, so each design starts from a point at least this good.
  std::tie(out.uncontrolled, std::ignore) = detail::uncontrolled_scc(net, hp, sp, b);
  std::optional<ControlSolution> base;
  try {
    base = enumerate_dbv_directions(net, hp, sp, b, {}, {}, nullptr,
                                    detail::control_options(cfg, derive_seed(cfg.seed, {3}), cfg.threads));
    out.control_only = base->f;
  } catch (const InfeasibleError&) {
  }

  out.candidates.resize(designs.size());
  std::vector<std::optional<ControlSolution>> solved(designs.size());
  const bool fan_out = designs.size() > 1;
  parallel_for(designs.size(), fan_out ? cfg.threads : 1, [&](std::size_t k) {
    detail::Stopwatch cc;
    auto& rec = out.candidates[k];
    rec.design = designs[k];
    try {
      const auto opt = detail::control_options(cfg, derive_seed(cfg.seed, {2, k}), fan_out ? 1 : cfg.threads);
      auto cs = enumerate_dbv_directions(net, hp, sp, b, designs[k].dbv_links, designs[k].afv_nodes,
                                         &out.fractional.eta, opt, base ? &base->eta : nullptr);
      rec.feasible = true;
      rec.f = cs.f;
      rec.f_indicator = scc_indicator(cs.states, net, sp);
      rec.status = "feasible";
      solved[k] = std::move(cs);
    } catch (const InfeasibleError& e) {
      rec.status = std::string("infeasible: ") + e.what();
    } catch (const NonConvergence& e) {
      rec.status = std::string("infeasible: ") + e.what();
    }
    rec.seconds = cc.lap();
  });
  out.times.control = clock.lap();

  int best = -1;
  for (std::size_t k = 0; k < out.candidates.size(); ++k)
    if (out.candidates[k].feasible && (best < 0 || out.candidates[k].f > out.candidates[best].f)) best = static_cast<int>(k);
  if (best < 0) throw InfeasibleError("all " + std::to_string(designs.size()) + " candidate designs are infeasible");

  out.best = out.candidates[best].design;
  out.control = std::move(*solved[best]);
  out.scc_smooth = out.control.f;
  out.scc_indicator = out.candidates[best].f_indicator;
  out.azp = azp(out.control.states, net);
  out.velocity_cdf = velocity_cdf(out.control.states, net, sp);
  out.times.total = total.lap() + parse_seconds;
  return out;
}

inline CmsSolution run_cms(const RunConfig& cfg) {
  validate(cfg);
  detail::Stopwatch clock;
  const auto net = load_network(cfg);
  return run_cms(net, cfg, clock.lap());
}

// ---- persistence --------------------------------------------------------

inline nlohmann::json ids_json(const NetworkModel& net, const std::vector<int>& idx, bool links) {
  nlohmann::json a = nlohmann::json::array();
  for (int i : idx) a.push_back(links ? net.links[i].id : net.nodes[i].id);
  return a;
}

inline nlohmann::json to_json(const StageTimes& t) {
  return {{"parse_s", t.parse},           {"bounds_s", t.bounds},     {"obbt_s", t.obbt},
          {"relaxation_s", t.relaxation}, {"sampling_s", t.sampling}, {"control_s", t.control},
          {"total_s", t.total}};
}

// Wall times sit under "timings" only, so that the rest of the document is
// reproducible from the seed.
inline nlohmann::json to_json(const CmsSolution& s, const NetworkModel& net) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : s.candidates)
    cands.push_back({{"index", c.design.index},
                     {"afv_nodes", ids_json(net, c.design.afv_nodes, false)},
                     {"dbv_links", ids_json(net, c.design.dbv_links, true)},
                     {"feasible", c.feasible},
                     {"scc_smooth", c.f},
                     {"scc_indicator", c.f_indicator},
                     {"status", c.status}});
  nlohmann::json obbt = nullptr;
  if (s.obbt) {
    obbt = to_json(*s.obbt);
    obbt.erase("wall_time_s");
  }
  return {{"best",
           {{"index", s.best.index},
            {"afv_nodes", ids_json(net, s.best.afv_nodes, false)},
            {"dbv_links", ids_json(net, s.best.dbv_links, true)}}},
          {"scc_smooth", s.scc_smooth},
          {"scc_indicator", s.scc_indicator},
          {"azp_m", s.azp},
          {"lp_upper_bound", s.lp_bound},
          {"uncontrolled_scc", s.uncontrolled},
          {"control_only_scc", s.control_only},
          {"control", to_json(s.control, net)},
          {"relaxation", to_json(s.relaxation)},
          {"obbt", obbt},
          {"candidates", cands},
          {"timings", to_json(s.times)}};
}

inline nlohmann::json to_json(const ControlReport& r, const NetworkModel& net) {
  return {{"scc_smooth", r.control.f},
          {"scc_indicator", r.scc_indicator},
          {"azp_m", r.azp},
          {"uncontrolled_scc", r.uncontrolled},
          {"uncontrolled_feasible", r.uncontrolled_feasible},
          {"control", to_json(r.control, net)},
          {"timings", {{"total_s", r.seconds}}}};
}

inline void write_candidates_csv(std::ostream& out, const CmsSolution& s, const NetworkModel& net) {
  out << "index,afv_nodes,dbv_links,feasible,scc_smooth,scc_indicator,status\n";
  out.precision(12);
  auto join = [&](const std::vector<int>& idx, bool links) {
    std::string r;
    for (int i : idx) r += (r.empty() ? "" : ";") + (links ? net.links[i].id : net.nodes[i].id);
    return r;
  };
  for (const auto& c : s.candidates) {
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out << c.design.index << ',' << join(c.design.afv_nodes, false) << ',' << join(c.design.dbv_links, true) << ','
        << (c.feasible ? 1 : 0) << ',' << c.f << ',' << c.f_indicator << ',' << status << '\n';
  }
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

}  // namespace detail

// solution.json, velocity_cdf.csv, candidates.csv, obbt_report.json and the
// SFSCP trace of the chosen design.
inline void write_outputs(const std::string& dir, const CmsSolution& s, const NetworkModel& net) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  detail::open_out(fs::path(dir) / "solution.json") << to_json(s, net).dump(2) << '\n';
  auto cdf = detail::open_out(fs::path(dir) / "velocity_cdf.csv");
  write_velocity_cdf(cdf, s.velocity_cdf, net);
  auto cand = detail::open_out(fs::path(dir) / "candidates.csv");
  write_candidates_csv(cand, s, net);
  nlohmann::json obbt = s.obbt ? to_json(*s.obbt) : nlohmann::json{{"enabled", false}};
  detail::open_out(fs::path(dir) / "obbt_report.json") << obbt.dump(2) << '\n';
  auto trace = detail::open_out(fs::path(dir) / "sfscp_trace.csv");
  write_trace_csv(trace, s.control);
}

inline void write_outputs(const std::string& dir, const ControlReport& r, const NetworkModel& net,
                          const SccParams& sp) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  detail::open_out(fs::path(dir) / "solution.json") << to_json(r, net).dump(2) << '\n';
  auto cdf = detail::open_out(fs::path(dir) / "velocity_cdf.csv");
  write_velocity_cdf(cdf, velocity_cdf(r.control.states, net, sp), net);
  auto trace = detail::open_out(fs::path(dir) / "sfscp_trace.csv");
  write_trace_csv(trace, r.control);
}

}  // namespace cms
