#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cms/envelopes.hpp"
#include "cms/hydraulics.hpp"
#include "cms/lp.hpp"
#include "cms/netmodel.hpp"
#include "cms/scc.hpp"

namespace cms {

struct BoundOptions {
  double u_max = 3.0;      // m/s, every link unless overridden
  double p_min = 15.0;     // m, at nonzero-demand nodes
  double alpha_max = 0.025;  // m^3/s per flushing valve
  std::optional<Eigen::VectorXd> u_max_per_link;
};

// Variable domains of the relaxed problem, per timestep. Theta bounds are
// phi(q_lo), phi(q_hi) and are derived on demand.
struct BoundSet {
  std::vector<Eigen::VectorXd> q_lo, q_hi;      // n_p each
  std::vector<Eigen::VectorXd> h_min, h_max;    // n_n each
  std::vector<Eigen::VectorXd> eta_lo, eta_hi;  // n_p each
  double alpha_max = 0.025;
  // Earlier flow boxes that contain the current one. Their envelope cuts stay
  // valid and keep the relaxation from loosening after tightening.
  std::vector<std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>> q_history;

  int n_t() const { return static_cast<int>(q_lo.size()); }

  // Largest flow-domain width over the given links and all timesteps.
  double diameter(const std::vector<int>& links) const {
    double d = 0.0;
    for (int t = 0; t < n_t(); ++t)
      for (int j : links) d = std::max(d, q_hi[t][j] - q_lo[t][j]);
    return d;
  }
};

namespace detail {

inline void check_bounds(const BoundSet& b) {
  for (int t = 0; t < b.n_t(); ++t) {
    for (Eigen::Index j = 0; j < b.q_lo[t].size(); ++j) {
      if (!(b.q_lo[t][j] <= b.q_hi[t][j])) throw ValidationError("inconsistent flow bounds on link " + std::to_string(j));
      if (!(b.eta_lo[t][j] <= b.eta_hi[t][j]))
        throw ValidationError("inconsistent valve-loss bounds on link " + std::to_string(j));
    }
    for (Eigen::Index i = 0; i < b.h_min[t].size(); ++i)
      if (!(b.h_min[t][i] <= b.h_max[t][i]))
        throw ValidationError("inconsistent head bounds at node " + std::to_string(i) +
                              ": minimum pressure head is above the highest source head");
  }
}

}  // namespace detail

// Recomputes eta bounds from the head bounds: for a link i -> k,
// eta_L = hmin_i - hmax_k and eta_U = hmax_i - hmin_k. Sources are pinned at h0.
inline void refresh_eta_bounds(const NetworkModel& net, BoundSet& b) {
  for (int t = 0; t < b.n_t(); ++t) {
    b.eta_lo[t].resize(net.n_p());
    b.eta_hi[t].resize(net.n_p());
    auto hmin = [&](NodeRef r) { return r.source ? net.source_heads[t][r.index] : b.h_min[t][r.index]; };
    auto hmax = [&](NodeRef r) { return r.source ? net.source_heads[t][r.index] : b.h_max[t][r.index]; };
    for (int j = 0; j < net.n_p(); ++j) {
      const auto& l = net.links[j];
      b.eta_lo[t][j] = std::min(0.0, hmin(l.from) - hmax(l.to));
      b.eta_hi[t][j] = std::max(0.0, hmax(l.from) - hmin(l.to));
    }
  }
}

inline BoundSet make_bounds(const NetworkModel& net, const BoundOptions& opt = {}) {
  if (!(opt.u_max > 0.0) || !(opt.alpha_max >= 0.0) || !(opt.p_min >= 0.0))
    throw ValidationError("bound options must be positive");
  BoundSet b;
  b.alpha_max = opt.alpha_max;
  const int nt = net.n_t();
  double h_top = -kInf;
  for (const auto& h0 : net.source_heads) h_top = std::max(h_top, h0.maxCoeff());
  const Eigen::VectorXd elev = net.elevations();
  for (int t = 0; t < nt; ++t) {
    Eigen::VectorXd cap(net.n_p());
    for (int j = 0; j < net.n_p(); ++j)
      cap[j] = net.links[j].area * (opt.u_max_per_link ? (*opt.u_max_per_link)[j] : opt.u_max);
    b.q_lo.push_back(-cap);
    b.q_hi.push_back(cap);
    Eigen::VectorXd hmin = elev;
    for (int i = 0; i < net.n_n(); ++i)
      if (net.demands[t][i] > 0.0) hmin[i] += opt.p_min;
    b.h_min.push_back(hmin);
    b.h_max.push_back(Eigen::VectorXd::Constant(net.n_n(), h_top));
  }
  b.eta_lo.resize(nt);
  b.eta_hi.resize(nt);
  refresh_eta_bounds(net, b);
  detail::check_bounds(b);
  return b;
}

// Forest flows are fixed by downstream demand plus up to n_f flushing valves
// inside the subtree. The u_max box is kept where it is compatible.
inline void apply_forest_bounds(const NetworkModel& net, const ForestCoreDecomposition& fc, int n_f, BoundSet& b) {
  for (int t = 0; t < b.n_t(); ++t) {
    const auto base = fc.forest_flows(net.demands[t]);
    for (std::size_t f = 0; f < fc.forest_links.size(); ++f) {
      const int j = fc.forest_links[f];
      const double slack =
          static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(n_f), fc.forest_downstream[f].size())) *
          b.alpha_max;
      double lo = base[f], hi = base[f];
      if (fc.forest_sign[f] > 0) hi += slack;
      else lo -= slack;
      const double nlo = std::max(lo, b.q_lo[t][j]), nhi = std::min(hi, b.q_hi[t][j]);
      if (nlo <= nhi) {
        b.q_lo[t][j] = nlo;
        b.q_hi[t][j] = nhi;
      } else {
        b.q_lo[t][j] = lo;
        b.q_hi[t][j] = hi;
      }
    }
  }
}

// Which links and nodes may receive new valves, and which are fixed.
struct DesignConfig {
  int n_v = 0;
  int n_f = 0;
  std::vector<int> dbv_candidates;  // links; never existing PRVs or DBVs
  std::vector<int> afv_candidates;  // demand nodes
};

// All pipes except existing valves are DBV candidates; every demand node is an
// AFV candidate.
inline DesignConfig default_design(const NetworkModel& net, int n_v, int n_f) {
  if (n_v < 0 || n_f < 0) throw ValidationError("valve counts must be non-negative");
  DesignConfig d;
  d.n_v = n_v;
  d.n_f = n_f;
  for (int j = 0; j < net.n_p(); ++j) {
    const auto& l = net.links[j];
    if (l.kind == LinkKind::Pipe && !l.is_existing_prv && !l.is_existing_dbv) d.dbv_candidates.push_back(j);
  }
  for (int i = 0; i < net.n_n(); ++i) d.afv_candidates.push_back(i);
  if (static_cast<int>(d.dbv_candidates.size()) < n_v) throw ValidationError("fewer DBV candidate links than n_v");
  if (static_cast<int>(d.afv_candidates.size()) < n_f) throw ValidationError("fewer AFV candidate nodes than n_f");
  return d;
}

// Column layout: per timestep [q h eta theta alpha sigma+ sigma- v+ v-], then z, y.
struct VariableMap {
  int n_p = 0, n_n = 0, n_t = 0;

  int block() const { return 7 * n_p + 2 * n_n; }
  int q(int t, int j) const { return t * block() + j; }
  int h(int t, int i) const { return t * block() + n_p + i; }
  int eta(int t, int j) const { return t * block() + n_p + n_n + j; }
  int theta(int t, int j) const { return t * block() + 2 * n_p + n_n + j; }
  int alpha(int t, int i) const { return t * block() + 3 * n_p + n_n + i; }
  int sigma_plus(int t, int j) const { return t * block() + 3 * n_p + 2 * n_n + j; }
  int sigma_minus(int t, int j) const { return t * block() + 4 * n_p + 2 * n_n + j; }
  int v_plus(int t, int j) const { return t * block() + 5 * n_p + 2 * n_n + j; }
  int v_minus(int t, int j) const { return t * block() + 6 * n_p + 2 * n_n + j; }
  int z(int j) const { return n_t * block() + j; }
  int y(int i) const { return n_t * block() + n_p + i; }
  int total() const { return n_t * block() + n_p + n_n; }
};

struct RelaxationStats {
  ProblemStats table;  // continuous, binary, nonconvex counts of the mixed-integer problem
  int sigma_vars = 0;
  int cols = 0;
  int rows = 0;
  int sigma_cuts = 0;
  int headloss_cuts = 0;
  std::map<std::string, int> envelope_cases;
};

struct RelaxedProblem {
  lp::LinearProgram lp;
  VariableMap map;
  RelaxationStats stats;
};

namespace detail {

inline HwEnvelope link_hw_envelope(const HeadLossParams& hp, const BoundSet& b, int t, int j) {
  HwEnvelope env = hw_envelope(hp, j, b.q_lo[t][j], b.q_hi[t][j]);
  for (const auto& [lo, hi] : b.q_history)
    if (lo[t][j] != b.q_lo[t][j] || hi[t][j] != b.q_hi[t][j]) env = refine(env, hw_envelope(hp, j, lo[t][j], hi[t][j]));
  return env;
}

inline SigmoidEnvelope link_sigmoid_envelope(bool minus, double area, double u_min, double rho, const BoundSet& b, int t,
                                             int j) {
  auto build = [&](double lo, double hi) {
    return minus ? sigmoid_envelope_minus(lo / area, hi / area, u_min, rho)
                 : sigmoid_envelope_plus(lo / area, hi / area, u_min, rho);
  };
  SigmoidEnvelope env = build(b.q_lo[t][j], b.q_hi[t][j]);
  for (const auto& [lo, hi] : b.q_history)
    if (lo[t][j] != b.q_lo[t][j] || hi[t][j] != b.q_hi[t][j]) env = refine(env, build(lo[t][j], hi[t][j]));
  return env;
}

}  // namespace detail

// Assembles the continuous relaxation: conservation rows, envelope cuts,
// big-M valve rows, valve-count rows, relaxed binaries and the sigma objective.
inline RelaxedProblem build_lp(const NetworkModel& net, const HeadLossParams& hp, const SccParams& sp,
                               const BoundSet& b, const DesignConfig& design) {
  using lp::Sense;
  detail::check_bounds(b);
  if (b.n_t() != net.n_t()) throw ValidationError("bound set timestep count does not match the network");
  const int np = net.n_p(), nn = net.n_n(), nt = net.n_t();
  RelaxedProblem out;
  auto& lp = out.lp;
  auto& m = out.map;
  m = {np, nn, nt};

  std::vector<char> dbv_cand(np, 0), afv_cand(nn, 0);
  for (int j : design.dbv_candidates) dbv_cand.at(j) = 1;
  for (int i : design.afv_candidates) afv_cand.at(i) = 1;

  const double obj_scale = 1.0 / nt;
  for (int t = 0; t < nt; ++t) {
    for (int j = 0; j < np; ++j)
      lp.add_variable(b.q_lo[t][j], b.q_hi[t][j], 0.0, "q_" + std::to_string(t) + "_" + net.links[j].id);
    for (int i = 0; i < nn; ++i)
      lp.add_variable(b.h_min[t][i], b.h_max[t][i], 0.0, "h_" + std::to_string(t) + "_" + net.nodes[i].id);
    for (int j = 0; j < np; ++j)
      lp.add_variable(b.eta_lo[t][j], b.eta_hi[t][j], 0.0, "eta_" + std::to_string(t) + "_" + net.links[j].id);
    for (int j = 0; j < np; ++j)
      lp.add_variable(phi(b.q_lo[t][j], hp, j), phi(b.q_hi[t][j], hp, j), 0.0,
                      "theta_" + std::to_string(t) + "_" + net.links[j].id);
    for (int i = 0; i < nn; ++i)
      lp.add_variable(0.0, b.alpha_max, 0.0, "alpha_" + std::to_string(t) + "_" + net.nodes[i].id);
    for (const char* s : {"sp_", "sm_"})
      for (int j = 0; j < np; ++j)
        lp.add_variable(0.0, sp.w[j] > 0.0 ? 1.0 : 0.0, -obj_scale * sp.w[j], s + std::to_string(t) + "_" + net.links[j].id);
    for (int dir = 0; dir < 2; ++dir)
      for (int j = 0; j < np; ++j) {
        const auto& l = net.links[j];
        double lo = 0.0, hi = 0.0;
        if (l.is_existing_prv) lo = hi = dir == 0 ? 1.0 : 0.0;
        else if (l.is_existing_dbv || dbv_cand[j]) hi = 1.0;
        lp.add_variable(lo, hi, 0.0, (dir == 0 ? "vp_" : "vm_") + std::to_string(t) + "_" + l.id);
      }
  }
  for (int j = 0; j < np; ++j) {
    const auto& l = net.links[j];
    const double fixed = (l.is_existing_prv || l.is_existing_dbv) ? 1.0 : 0.0;
    lp.add_variable(fixed, dbv_cand[j] ? 1.0 : fixed, 0.0, "z_" + l.id);
  }
  for (int i = 0; i < nn; ++i) lp.add_variable(0.0, afv_cand[i] ? 1.0 : 0.0, 0.0, "y_" + net.nodes[i].id);

  std::vector<lp::Term> terms;
  for (int t = 0; t < nt; ++t) {
    const std::string ts = std::to_string(t);
    // energy: A12 h + theta + eta = -A10 h0, with A12 = -1 at the from node, +1 at the to node
    for (int j = 0; j < np; ++j) {
      const auto& l = net.links[j];
      terms.clear();
      double rhs = 0.0;
      if (l.from.source) rhs += net.source_heads[t][l.from.index];
      else terms.push_back({m.h(t, l.from.index), -1.0});
      if (l.to.source) rhs -= net.source_heads[t][l.to.index];
      else terms.push_back({m.h(t, l.to.index), 1.0});
      terms.push_back({m.theta(t, j), 1.0});
      terms.push_back({m.eta(t, j), 1.0});
      lp.add_row(terms, Sense::Equal, rhs, "energy_" + ts + "_" + l.id);
    }
    // mass: A12^T q - alpha = d
    std::vector<std::vector<lp::Term>> node_terms(nn);
    for (int j = 0; j < np; ++j) {
      const auto& l = net.links[j];
      if (!l.from.source) node_terms[l.from.index].push_back({m.q(t, j), -1.0});
      if (!l.to.source) node_terms[l.to.index].push_back({m.q(t, j), 1.0});
    }
    for (int i = 0; i < nn; ++i) {
      node_terms[i].push_back({m.alpha(t, i), -1.0});
      lp.add_row(node_terms[i], Sense::Equal, net.demands[t][i], "mass_" + ts + "_" + net.nodes[i].id);
    }
    for (int j = 0; j < np; ++j) {
      const auto& id = net.links[j].id;
      const double ql = b.q_lo[t][j], qu = b.q_hi[t][j];
      const double tl = phi(ql, hp, j), tu = phi(qu, hp, j);
      const int q = m.q(t, j), th = m.theta(t, j), eta = m.eta(t, j), vp = m.v_plus(t, j), vm = m.v_minus(t, j);
      lp.add_row({{eta, 1.0}, {vp, -b.eta_hi[t][j]}}, Sense::LessEqual, 0.0, "bigm_a_" + ts + "_" + id);
      lp.add_row({{eta, -1.0}, {vm, b.eta_lo[t][j]}}, Sense::LessEqual, 0.0, "bigm_b_" + ts + "_" + id);
      lp.add_row({{q, -1.0}, {vp, -ql}}, Sense::LessEqual, -ql, "bigm_c_" + ts + "_" + id);
      lp.add_row({{q, 1.0}, {vm, qu}}, Sense::LessEqual, qu, "bigm_d_" + ts + "_" + id);
      lp.add_row({{th, -1.0}, {vp, -tl}}, Sense::LessEqual, -tl, "bigm_e_" + ts + "_" + id);
      lp.add_row({{th, 1.0}, {vm, tu}}, Sense::LessEqual, tu, "bigm_f_" + ts + "_" + id);
      lp.add_row({{vp, 1.0}, {vm, 1.0}, {m.z(j), -1.0}}, Sense::LessEqual, 0.0, "direction_" + ts + "_" + id);

      const auto hw = detail::link_hw_envelope(hp, b, t, j);
      ++out.stats.envelope_cases[std::string(to_string(hw.tag))];
      int c = 0;
      for (const auto& cut : hw_cuts(hw)) {
        lp.add_row({{q, cut.coeff_q}, {th, cut.coeff_aux}}, Sense::LessEqual, cut.rhs,
                   "hw_" + ts + "_" + id + "_" + std::to_string(c++));
        ++out.stats.headloss_cuts;
      }
      if (sp.w[j] == 0.0) continue;
      const double area = net.links[j].area;
      for (bool minus : {false, true}) {
        const auto env = detail::link_sigmoid_envelope(minus, area, sp.u_min[j], sp.rho, b, t, j);
        ++out.stats.envelope_cases[std::string(to_string(env.tag))];
        const int sig = minus ? m.sigma_minus(t, j) : m.sigma_plus(t, j);
        c = 0;
        for (const auto& cut : sigmoid_cuts(env, area)) {
          lp.add_row({{q, cut.coeff_q}, {sig, cut.coeff_aux}}, Sense::LessEqual, cut.rhs,
                     (minus ? "sm_cut_" : "sp_cut_") + ts + "_" + id + "_" + std::to_string(c++));
          ++out.stats.sigma_cuts;
        }
      }
    }
    for (int i = 0; i < nn; ++i)
      lp.add_row({{m.alpha(t, i), 1.0}, {m.y(i), -b.alpha_max}}, Sense::LessEqual, 0.0,
                 "flush_" + ts + "_" + net.nodes[i].id);
  }
  terms.clear();
  for (int j : design.dbv_candidates) terms.push_back({m.z(j), 1.0});
  lp.add_row(terms, Sense::Equal, design.n_v, "dbv_count");
  terms.clear();
  for (int i : design.afv_candidates) terms.push_back({m.y(i), 1.0});
  lp.add_row(terms, Sense::Equal, design.n_f, "afv_count");

  out.stats.table = problem_stats(np, nn, nt);
  out.stats.sigma_vars = 2 * np * nt;
  out.stats.cols = lp.num_cols();
  out.stats.rows = lp.num_rows();
  return out;
}

struct FractionalDesign {
  Eigen::VectorXd y;                 // n_n, in [0, 1]
  Eigen::VectorXd z;                 // n_p, in [0, 1], zero off the candidate set
  std::vector<Eigen::VectorXd> eta;  // per timestep, seed for the first start
};

inline FractionalDesign extract_fractional(const lp::LpSolution& sol, const VariableMap& m,
                                           const DesignConfig& design) {
  if (sol.status != lp::Status::Optimal)
    throw InfeasibleError(std::string("relaxed problem did not solve to optimality: ") + lp::to_string(sol.status));
  FractionalDesign f;
  f.y = Eigen::VectorXd::Zero(m.n_n);
  f.z = Eigen::VectorXd::Zero(m.n_p);
  // Values at round-off level are solver noise, not support for the sampler.
  auto clean = [](double v) { return v < 1e-9 ? 0.0 : std::min(v, 1.0); };
  for (int i : design.afv_candidates) f.y[i] = clean(sol.x[m.y(i)]);
  for (int j : design.dbv_candidates) f.z[j] = clean(sol.x[m.z(j)]);
  for (int t = 0; t < m.n_t; ++t) {
    Eigen::VectorXd e(m.n_p);
    for (int j = 0; j < m.n_p; ++j) e[j] = sol.x[m.eta(t, j)];
    f.eta.push_back(std::move(e));
  }
  return f;
}

// The relaxation is often dual degenerate: many placements reach the same
// bound and the simplex returns whichever vertex it meets first, which puts
// the whole sampling weight on an arbitrary node. This returns the average of
// the vertices that maximize each candidate placement variable over the
// optimal face (objective within rel_tol of the optimum), so that every
// placement some optimal solution uses gets weight. The result is a sampling
// distribution, not necessarily a point of the face.
inline lp::LpSolution central_solution(const RelaxedProblem& rp, const lp::LpSolution& sol, const DesignConfig& design,
                                       const lp::LpOptions& opt = {}, unsigned threads = 1, double rel_tol = 1e-7) {
  if (sol.status != lp::Status::Optimal)
    throw InfeasibleError(std::string("relaxed problem did not solve to optimality: ") + lp::to_string(sol.status));
  std::vector<int> cols;
  for (int j : design.dbv_candidates) cols.push_back(rp.map.z(j));
  for (int i : design.afv_candidates) cols.push_back(rp.map.y(i));
  if (cols.empty()) return sol;

  lp::LinearProgram face = rp.lp;
  std::vector<lp::Term> obj;
  for (int c = 0; c < face.num_cols(); ++c)
    if (face.cost[c] != 0.0) obj.emplace_back(c, face.cost[c]);
  face.add_row(obj, lp::Sense::LessEqual, sol.objective + rel_tol * (1.0 + std::abs(sol.objective)), "optimal_face");
  std::fill(face.cost.begin(), face.cost.end(), 0.0);

  constexpr std::size_t chunk = 8;
  const std::size_t chunks = (cols.size() + chunk - 1) / chunk;
  std::vector<std::vector<double>> x(cols.size());
  parallel_for(chunks, threads, [&](std::size_t c) {
    lp::LinearProgram prog = face;
    lp::Basis basis;
    for (std::size_t k = c * chunk; k < std::min(cols.size(), (c + 1) * chunk); ++k) {
      prog.cost[cols[k]] = -1.0;
      auto r = lp::solve_lp(prog, opt, basis.empty() ? nullptr : &basis);
      prog.cost[cols[k]] = 0.0;
      if (r.status != lp::Status::Optimal) continue;  // numerical trouble: leave this vertex out
      basis = r.basis;
      x[k] = std::move(r.x);
    }
  });

  // Every column averages over all vertices, except that z and y average only
  // over the vertices that maximize their own kind. Otherwise the vertices
  // maximizing one kind leave the other at the arbitrary first vertex.
  const std::size_t nz = design.dbv_candidates.size();
  auto average = [&](std::size_t from, std::size_t to, std::vector<double>& acc) {
    int used = 0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = from; k < to; ++k) {
      if (x[k].empty()) continue;
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += x[k][c];
      ++used;
    }
    for (double& v : acc) v /= std::max(used, 1);
    return used;
  };
  lp::LpSolution out = sol;
  std::vector<double> zs(sol.x.size()), ys(sol.x.size());
  if (average(0, cols.size(), out.x) == 0) return sol;
  if (average(0, nz, zs) > 0)
    for (int j : design.dbv_candidates) out.x[rp.map.z(j)] = zs[rp.map.z(j)];
  if (average(nz, cols.size(), ys) > 0)
    for (int i : design.afv_candidates) out.x[rp.map.y(i)] = ys[rp.map.y(i)];
  out.objective = 0.0;
  for (int c = 0; c < rp.lp.num_cols(); ++c) out.objective += rp.lp.cost[c] * out.x[c];
  return out;
}

// Upper bound on the achievable smooth SCC for the same valve counts.
inline double lp_bound(const lp::LpSolution& sol) {
  if (sol.status != lp::Status::Optimal) throw InfeasibleError("no bound: relaxed problem not optimal");
  return -sol.objective;
}

struct LimitTolerances {
  double flow = 1e-8;  // m^3/s, the hydraulic mass tolerance
  double head = 1e-6;  // m
};

// Whether simulated states respect the operating limits of the relaxation:
// the flow and head boxes, and on valve links a flow direction that agrees
// with the sign of the valve loss. PRVs only pass positive flow.
inline bool within_limits(const NetworkModel& net, const BoundSet& b, const std::vector<HydraulicState>& states,
                          const std::vector<char>& has_valve, const LimitTolerances& tol = {}) {
  for (int t = 0; t < b.n_t(); ++t) {
    const auto& s = states.at(t);
    for (int j = 0; j < net.n_p(); ++j) {
      if (s.q[j] < b.q_lo[t][j] - tol.flow || s.q[j] > b.q_hi[t][j] + tol.flow) return false;
      const bool valve = net.links[j].is_existing_prv || net.links[j].is_existing_dbv || (has_valve.size() && has_valve[j]);
      if (!valve) continue;
      if (net.links[j].is_existing_prv && (s.q[j] < -tol.flow || s.eta[j] < 0.0)) return false;
      if (s.eta[j] > 0.0 && s.q[j] < -tol.flow) return false;
      if (s.eta[j] < 0.0 && s.q[j] > tol.flow) return false;
    }
    for (int i = 0; i < net.n_n(); ++i)
      if (s.h[i] < b.h_min[t][i] - tol.head || s.h[i] > b.h_max[t][i] + tol.head) return false;
  }
  return true;
}

// Maps a simulated, feasible control into the relaxed variable space with
// integral valve variables and sigma = psi(u). Used to certify that the
// relaxation contains every feasible operating point.
inline std::vector<double> embed_state(const NetworkModel& net, const RelaxedProblem& rp, const SccParams& sp,
                                       const std::vector<HydraulicState>& states, const std::vector<int>& dbv_links,
                                       const std::vector<int>& afv_nodes) {
  const auto& m = rp.map;
  std::vector<double> x(m.total(), 0.0);
  std::vector<char> has_valve(net.n_p(), 0);
  for (int j : dbv_links) has_valve[j] = 1;
  for (int j = 0; j < net.n_p(); ++j) {
    if (net.links[j].is_existing_prv || net.links[j].is_existing_dbv) has_valve[j] = 1;
    x[m.z(j)] = has_valve[j];
  }
  for (int i : afv_nodes) x[m.y(i)] = 1.0;
  for (int t = 0; t < m.n_t; ++t) {
    const auto& s = states[t];
    for (int j = 0; j < net.n_p(); ++j) {
      x[m.q(t, j)] = s.q[j];
      x[m.eta(t, j)] = s.eta[j];
      x[m.theta(t, j)] = s.theta[j];
      if (has_valve[j]) {
        const bool prv = net.links[j].is_existing_prv;
        const bool plus = prv || s.eta[j] > 0.0 || (s.eta[j] == 0.0 && s.q[j] >= 0.0);
        x[m.v_plus(t, j)] = plus ? 1.0 : 0.0;
        x[m.v_minus(t, j)] = plus ? 0.0 : 1.0;
      }
      if (sp.w[j] > 0.0) {
        const double u = s.q[j] / net.links[j].area;
        x[m.sigma_plus(t, j)] = psi_plus(u, sp.u_min[j], sp.rho);
        x[m.sigma_minus(t, j)] = psi_minus(u, sp.u_min[j], sp.rho);
      }
    }
    for (int i = 0; i < net.n_n(); ++i) {
      x[m.h(t, i)] = s.h[i];
      x[m.alpha(t, i)] = s.alpha[i];
    }
  }
  return x;
}

inline nlohmann::json to_json(const RelaxationStats& s) {
  nlohmann::json cases = nlohmann::json::object();
  for (const auto& [k, v] : s.envelope_cases) cases[k] = v;
  return {{"continuous_variables", s.table.continuous},
          {"binary_variables", s.table.binary},
          {"nonconvex_terms", s.table.nonconvex},
          {"sigma_variables", s.sigma_vars},
          {"lp_columns", s.cols},
          {"lp_rows", s.rows},
          {"sigma_cuts", s.sigma_cuts},
          {"headloss_cuts", s.headloss_cuts},
          {"envelope_cases", cases}};
}

}  // namespace cms
