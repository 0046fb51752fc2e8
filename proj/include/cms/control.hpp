#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cms/hydraulics.hpp"
#include "cms/lp.hpp"
#include "cms/relaxation.hpp"
#include "cms/scc.hpp"

namespace cms {

struct RestorationOptions {
  double mu0 = 1e2;
  double mu_max = 1e8;
  double head_margin = 1e-3;  // m, aim this far inside the head limits
  double flow_margin = 1e-8;  // m^3/s
  int max_iter = 60;          // damped Gauss-Newton steps per penalty level
};

struct ControlOptions {
  int starts = 5;          // M
  double eps_tol = 1e-4;   // relative improvement that ends an SFSCP run
  int k_max = 50;
  double trust = 0.25;     // step box as a fraction of each control range
  double beta_min = 1e-8;
  int max_dbv = 16;        // 2^n patterns per timestep
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool trace = false;
  HydraulicOptions hydraulics;
  RestorationOptions restore;
  lp::LpOptions lp;
};

// One timestep with a fixed valve placement and flow-direction pattern.
// Controls x = [eta on valve links; alpha at flushing nodes].
struct ControlProblem {
  const NetworkModel* net = nullptr;
  const HeadLossParams* hp = nullptr;
  const SccParams* sp = nullptr;
  const BoundSet* bounds = nullptr;
  int t = 0;
  std::vector<int> valves;  // PRVs first, then DBVs in pattern-bit order
  std::vector<int> dir;     // +1 or -1 per valve
  std::vector<int> afv;
  Eigen::VectorXd lo, hi;   // control box
  Eigen::VectorXd range;    // full control range, scales the trust box
  Eigen::VectorXd q_lo, q_hi;  // flow box with the direction pattern applied

  int size() const { return static_cast<int>(valves.size() + afv.size()); }
  int n_eta() const { return static_cast<int>(valves.size()); }

  Eigen::VectorXd eta_full(const Eigen::VectorXd& x) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(net->n_p());
    for (int k = 0; k < n_eta(); ++k) e[valves[k]] = x[k];
    return e;
  }
  Eigen::VectorXd alpha_full(const Eigen::VectorXd& x) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(net->n_n());
    for (std::size_t k = 0; k < afv.size(); ++k) a[afv[k]] = x[n_eta() + static_cast<int>(k)];
    return a;
  }
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

// DBVs in a placement: existing ones plus the designed links, sorted.
inline std::vector<int> dbv_set(const NetworkModel& net, const std::vector<int>& designed) {
  std::vector<int> out;
  for (int j = 0; j < net.n_p(); ++j)
    if (net.links[j].is_existing_dbv) out.push_back(j);
  for (int j : designed) {
    if (j < 0 || j >= net.n_p()) throw ValidationError("DBV link index out of range");
    if (net.links[j].is_existing_prv) throw ValidationError("cannot place a DBV on existing PRV " + net.links[j].id);
    out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Pattern bit k set means DBV k carries negative flow.
inline ControlProblem make_control_problem(const NetworkModel& net, const HeadLossParams& hp, const SccParams& sp,
                                           const BoundSet& b, int t, const std::vector<int>& dbv_links,
                                           const std::vector<int>& afv_nodes, unsigned pattern) {
  ControlProblem P{&net, &hp, &sp, &b, t};
  for (int j = 0; j < net.n_p(); ++j)
    if (net.links[j].is_existing_prv) {
      P.valves.push_back(j);
      P.dir.push_back(+1);
    }
  const auto dbvs = dbv_set(net, dbv_links);
  for (std::size_t k = 0; k < dbvs.size(); ++k) {
    P.valves.push_back(dbvs[k]);
    P.dir.push_back((pattern >> k) & 1u ? -1 : +1);
  }
  for (int i : afv_nodes) {
    if (i < 0 || i >= net.n_n()) throw ValidationError("AFV node index out of range");
    P.afv.push_back(i);
  }
  const int m = P.size();
  P.lo.resize(m);
  P.hi.resize(m);
  P.range.resize(m);
  P.q_lo = b.q_lo[t];
  P.q_hi = b.q_hi[t];
  for (int k = 0; k < P.n_eta(); ++k) {
    const int j = P.valves[k];
    const double el = b.eta_lo[t][j], eu = b.eta_hi[t][j];
    P.range[k] = eu - el;
    if (P.dir[k] > 0) {
      P.lo[k] = 0.0, P.hi[k] = eu;
      P.q_lo[j] = std::max(P.q_lo[j], 0.0);
    } else {
      P.lo[k] = el, P.hi[k] = 0.0;
      P.q_hi[j] = std::min(P.q_hi[j], 0.0);
    }
  }
  for (std::size_t k = 0; k < P.afv.size(); ++k) {
    const int c = P.n_eta() + static_cast<int>(k);
    P.lo[c] = 0.0, P.hi[c] = P.range[c] = b.alpha_max;
  }
  return P;
}

struct Evaluation {
  bool solved = false;     // hydraulic solve converged
  bool feasible = false;   // state inside the operating limits
  double f = -kInf;        // weighted SCC at this timestep
  HydraulicState state;
};

inline Evaluation evaluate_control(const ControlProblem& P, const Eigen::VectorXd& x, const ControlOptions& opt,
                                   const HydraulicState* warm = nullptr, const LimitTolerances& tol = {}) {
  Evaluation ev;
  try {
    ev.state = solve_steady(*P.net, *P.hp, P.t, P.eta_full(x), P.alpha_full(x), {}, opt.hydraulics, warm);
  } catch (const NonConvergence&) {
    return ev;
  } catch (const SingularSystem&) {
    return ev;
  }
  ev.solved = true;
  ev.f = scc_smooth_flows({ev.state.q}, *P.net, *P.sp);
  const auto& b = *P.bounds;
  ev.feasible = true;
  for (int j = 0; j < P.net->n_p() && ev.feasible; ++j)
    ev.feasible = ev.state.q[j] >= P.q_lo[j] - tol.flow && ev.state.q[j] <= P.q_hi[j] + tol.flow;
  for (int i = 0; i < P.net->n_n() && ev.feasible; ++i)
    ev.feasible = ev.state.h[i] >= b.h_min[P.t][i] - tol.head && ev.state.h[i] <= b.h_max[P.t][i] + tol.head;
  return ev;
}

// First-order response of flows and heads to the controls, from the
// linearized conservation laws at a converged state:
//   G dq + A12 dh + d_eta = 0,  A12^T dq = d_alpha,  G = diag(phi'(q)).
struct Sensitivity {
  Eigen::MatrixXd dq;  // n_p x m
  Eigen::MatrixXd dh;  // n_n x m
};

inline Sensitivity sensitivities(const ControlProblem& P, const HydraulicState& s) {
  const auto& net = *P.net;
  const int np = net.n_p(), nn = net.n_n(), m = P.size();
  Eigen::VectorXd dinv(np);
  for (int j = 0; j < np; ++j) dinv[j] = 1.0 / std::max(phi_prime(s.q[j], *P.hp, j), 1e-7);
  const auto a12 = net.A12();
  Sensitivity out{Eigen::MatrixXd::Zero(np, m), Eigen::MatrixXd::Zero(nn, m)};
  if (m == 0) return out;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nn, m);
  Eigen::MatrixXd eta_unit = Eigen::MatrixXd::Zero(np, m);
  for (int k = 0; k < P.n_eta(); ++k) {
    const int j = P.valves[k];
    eta_unit(j, k) = 1.0;
    const auto& l = net.links[j];
    // S dh = -A12^T G^-1 e_j
    if (!l.from.source) rhs(l.from.index, k) += dinv[j];
    if (!l.to.source) rhs(l.to.index, k) -= dinv[j];
  }
  for (std::size_t k = 0; k < P.afv.size(); ++k) rhs(P.afv[k], P.n_eta() + static_cast<int>(k)) = -1.0;
  if (nn > 0) {
    Eigen::SparseMatrix<double> schur = a12.transpose() * dinv.asDiagonal() * a12;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(schur);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("sensitivity system is singular");
    out.dh = ldlt.solve(rhs);
  }
  out.dq = -(dinv.asDiagonal() * (a12 * out.dh + eta_unit));
  return out;
}

// Gradient of the timestep SCC with respect to the controls.
inline Eigen::VectorXd control_gradient(const ControlProblem& P, const HydraulicState& s, const Sensitivity& sens) {
  const Eigen::VectorXd gq = scc_smooth_grad_flows({s.q}, *P.net, *P.sp)[0];
  return sens.dq.transpose() * gq;
}

// ------------------------------------------------------------ restoration

namespace detail {

// Hinge residuals of the operating limits (flows in velocity units) and
// their Jacobian with respect to the controls.
inline void limit_hinges(const ControlProblem& P, const HydraulicState& s, const Sensitivity* sens, double q_margin,
                         double h_margin, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
  const auto& net = *P.net;
  const auto& b = *P.bounds;
  std::vector<double> vals;
  std::vector<Eigen::VectorXd> rows;
  auto push = [&](double g, const Eigen::VectorXd* row, double sign, double scale) {
    if (g <= 0.0) return;
    vals.push_back(g);
    if (J) rows.push_back(sign * scale * *row);
  };
  Eigen::VectorXd row;
  for (int j = 0; j < net.n_p(); ++j) {
    const double a = net.links[j].area;
    if (J) row = sens->dq.row(j).transpose();
    push((P.q_lo[j] + q_margin - s.q[j]) / a, &row, -1.0, 1.0 / a);
    push((s.q[j] - P.q_hi[j] + q_margin) / a, &row, 1.0, 1.0 / a);
  }
  for (int i = 0; i < net.n_n(); ++i) {
    if (J) row = sens->dh.row(i).transpose();
    push(b.h_min[P.t][i] + h_margin - s.h[i], &row, -1.0, 1.0);
    push(s.h[i] - b.h_max[P.t][i], &row, 1.0, 1.0);
  }
  r = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  if (J) {
    J->resize(static_cast<Eigen::Index>(rows.size()), P.size());
    for (std::size_t k = 0; k < rows.size(); ++k) J->row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  }
}

}  // namespace detail

struct Restoration {
  Eigen::VectorXd x;
  Evaluation eval;
  double distance = 0.0;  // ||eta - eta0||^2
  double mu = 0.0;        // penalty weight that succeeded, 0 if x0 was feasible
};

// Nearest controls (in eta) whose simulated state meets the operating limits:
// minimize ||eta - eta0||^2 + mu * sum hinge^2 with mu raised tenfold until
// the limits hold. Each penalty level runs damped Gauss-Newton steps on the
// box. Returns nullopt when mu_max still leaves a violation.
inline std::optional<Restoration> restore_feasibility(const ControlProblem& P, const Eigen::VectorXd& x0,
                                                      const ControlOptions& opt = {}) {
  const auto& ro = opt.restore;
  const int m = P.size(), ne = P.n_eta();
  Restoration res;
  res.x = P.clamp(x0);
  res.eval = evaluate_control(P, res.x, opt);
  if (res.eval.feasible) {
    res.distance = (res.x - x0).head(ne).squaredNorm();
    return res;
  }
  if (m == 0 || !res.eval.solved) return std::nullopt;

  const Eigen::VectorXd eta0 = x0.head(ne);
  Eigen::VectorXd x = res.x;
  Evaluation ev = res.eval;
  auto penalty = [&](const Eigen::VectorXd& xx, const HydraulicState& s, double mu) {
    Eigen::VectorXd r;
    detail::limit_hinges(P, s, nullptr, ro.flow_margin, ro.head_margin, r, nullptr);
    return (xx.head(ne) - eta0).squaredNorm() + mu * r.squaredNorm();
  };
  for (double mu = ro.mu0; mu <= ro.mu_max * (1 + 1e-12); mu *= 10.0) {
    double lambda = 1e-3;
    double pen = penalty(x, ev.state, mu);
    for (int it = 0; it < ro.max_iter; ++it) {
      const auto sens = sensitivities(P, ev.state);
      Eigen::VectorXd r;
      Eigen::MatrixXd Jh;
      detail::limit_hinges(P, ev.state, &sens, ro.flow_margin, ro.head_margin, r, &Jh);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
      g.head(ne) = x.head(ne) - eta0;
      H.topLeftCorner(ne, ne).setIdentity();
      g += mu * Jh.transpose() * r;
      H += mu * Jh.transpose() * Jh;
      bool moved = false;
      for (int tries = 0; tries < 30; ++tries) {
        Eigen::MatrixXd Hd = H;
        for (int i = 0; i < m; ++i) Hd(i, i) += lambda * std::max(H(i, i), 1.0);
        const Eigen::VectorXd step = Hd.ldlt().solve(-g);
        const Eigen::VectorXd xn = P.clamp(x + step);
        if ((xn - x).lpNorm<Eigen::Infinity>() < 1e-12) break;
        auto evn = evaluate_control(P, xn, opt, &ev.state);
        if (evn.solved) {
          const double pn = penalty(xn, evn.state, mu);
          if (pn < pen) {
            x = xn, ev = std::move(evn), pen = pn;
            lambda = std::max(lambda / 3.0, 1e-9);
            moved = true;
            break;
          }
        }
        lambda *= 4.0;
      }
      if (ev.feasible) {
        res.x = x;
        res.eval = ev;
        res.distance = (x.head(ne) - eta0).squaredNorm();
        res.mu = mu;
        return res;
      }
      if (!moved) break;
    }
  }
  return std::nullopt;
}

// ------------------------------------------------------------ SFSCP

struct SfscpTraceRow {
  int k = 0;
  double f = 0.0;
  double beta = 0.0;
  double mass_residual = 0.0;
  double energy_residual = 0.0;
};

enum class SfscpStatus { Converged, Stationary, IterationLimit, LineSearchStall, LpFailure };

inline const char* to_string(SfscpStatus s) {
  switch (s) {
    case SfscpStatus::Converged: return "converged";
    case SfscpStatus::Stationary: return "stationary";
    case SfscpStatus::IterationLimit: return "iteration_limit";
    case SfscpStatus::LineSearchStall: return "line_search_stall";
    case SfscpStatus::LpFailure: return "lp_failure";
  }
  return "?";
}

struct SfscpResult {
  Eigen::VectorXd x;
  Evaluation eval;
  int iterations = 0;
  int backtracks = 0;
  SfscpStatus status = SfscpStatus::Converged;
  std::vector<double> f_history;  // accepted objective values, starting at x0
  std::vector<SfscpTraceRow> trace;
};

namespace detail {

inline SfscpTraceRow trace_row(const ControlProblem& P, const Evaluation& ev, int k, double beta) {
  const auto& net = *P.net;
  const auto& s = ev.state;
  const Eigen::VectorXd mass = net.A12().transpose() * s.q - net.demands[P.t] - s.alpha;
  return {k, ev.f, beta, mass.size() ? mass.lpNorm<Eigen::Infinity>() : 0.0, energy_residual(net, *P.hp, s, P.t)};
}

}  // namespace detail

// Sequential feasible linear programming: linearize the SCC and the state
// limits at x_k, take the LP step inside a trust box, then halve the step
// until the simulated point is feasible and no worse.
// `start` may carry the already simulated x0.
inline SfscpResult sfscp_solve(const ControlProblem& P, const Eigen::VectorXd& x0, const ControlOptions& opt = {},
                               const Evaluation* start = nullptr) {
  using lp::Sense;
  SfscpResult res;
  res.x = x0;
  res.eval = start ? *start : evaluate_control(P, x0, opt);
  if (!res.eval.feasible) throw InfeasibleError("sfscp: starting point is not hydraulically feasible");
  res.f_history.push_back(res.eval.f);
  if (opt.trace) res.trace.push_back(detail::trace_row(P, res.eval, 0, 0.0));
  const int m = P.size();
  const auto& b = *P.bounds;
  if (m == 0) {
    res.status = SfscpStatus::Stationary;
    return res;
  }
  res.status = SfscpStatus::IterationLimit;
  for (int k = 1; k <= opt.k_max; ++k) {
    res.iterations = k;
    const auto& s = res.eval.state;
    const auto sens = sensitivities(P, s);
    const Eigen::VectorXd c = control_gradient(P, s, sens);
    const double scale = c.lpNorm<Eigen::Infinity>();
    if (!(scale > 0.0)) {
      res.status = SfscpStatus::Stationary;
      break;
    }
    lp::LinearProgram prog;
    Eigen::VectorXd step_lo(m), step_hi(m);
    for (int i = 0; i < m; ++i) {
      step_lo[i] = std::min(0.0, std::max(P.lo[i] - res.x[i], -opt.trust * P.range[i]));
      step_hi[i] = std::max(0.0, std::min(P.hi[i] - res.x[i], opt.trust * P.range[i]));
      prog.add_variable(step_lo[i], step_hi[i], -c[i] / scale);
    }
    // Linearized limits, kept only where the trust box could reach them.
    std::vector<lp::Term> terms;
    auto add_limits = [&](const Eigen::MatrixXd& J, const Eigen::VectorXd& val, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
      for (Eigen::Index r = 0; r < J.rows(); ++r) {
        double reach = 0.0;
        for (int i = 0; i < m; ++i) reach += std::abs(J(r, i)) * std::max(-step_lo[i], step_hi[i]);
        if (reach == 0.0) continue;
        const bool low = val[r] - reach < lo[r], high = val[r] + reach > hi[r];
        if (!low && !high) continue;
        terms.clear();
        for (int i = 0; i < m; ++i)
          if (J(r, i) != 0.0) terms.push_back({i, J(r, i)});
        if (low) prog.add_row(terms, Sense::GreaterEqual, std::min(0.0, lo[r] - val[r]));
        if (high) prog.add_row(terms, Sense::LessEqual, std::max(0.0, hi[r] - val[r]));
      }
    };
    add_limits(sens.dq, s.q, P.q_lo, P.q_hi);
    add_limits(sens.dh, s.h, b.h_min[P.t], b.h_max[P.t]);
    const auto sol = lp::solve_lp(prog, opt.lp);
    if (sol.status != lp::Status::Optimal) {
      res.status = SfscpStatus::LpFailure;
      break;
    }
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(sol.x.data(), m);
    if (c.dot(d) <= 1e-12 * scale * std::max(1.0, d.lpNorm<Eigen::Infinity>()) || d.lpNorm<Eigen::Infinity>() < 1e-12) {
      res.status = SfscpStatus::Stationary;
      break;
    }
    double beta = 1.0;
    std::optional<Evaluation> accepted;
    Eigen::VectorXd xn;
    while (beta >= opt.beta_min) {
      xn = P.clamp(res.x + beta * d);
      auto ev = evaluate_control(P, xn, opt, &s);
      if (ev.feasible && ev.f >= res.eval.f) {
        accepted = std::move(ev);
        break;
      }
      beta *= 0.5;
      ++res.backtracks;
    }
    if (!accepted) {
      res.status = SfscpStatus::LineSearchStall;
      break;
    }
    const double f_old = res.eval.f;
    res.x = xn;
    res.eval = std::move(*accepted);
    res.f_history.push_back(res.eval.f);
    if (opt.trace) res.trace.push_back(detail::trace_row(P, res.eval, k, beta));
    if (res.eval.f - f_old < opt.eps_tol * std::max(std::abs(f_old), 1e-12)) {
      res.status = SfscpStatus::Converged;
      break;
    }
  }
  return res;
}

// ------------------------------------------------------------ multi-start

struct StartResult {
  bool feasible = false;
  int start = 0;
  unsigned pattern = 0;
  SfscpResult run;
};

// Start 0 takes eta from the seed (LP solution), later starts draw eta
// uniformly over the valve's directional range. Flushing starts at zero.
inline Eigen::VectorXd start_point(const ControlProblem& P, int start, const Eigen::VectorXd* eta_seed,
                                   std::uint64_t seed) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(P.size());
  if (start == 0) {
    if (eta_seed)
      for (int k = 0; k < P.n_eta(); ++k) x[k] = (*eta_seed)[P.valves[k]];
  } else {
    std::mt19937_64 eng(seed);
    for (int k = 0; k < P.n_eta(); ++k) x[k] = P.lo[k] + uniform01(eng) * (P.hi[k] - P.lo[k]);
  }
  return P.clamp(x);
}

// Start index opt.starts, when present, is the incumbent: a known operating
// point (for example the existing-valve optimum) with new valves at zero.
inline StartResult run_start(const ControlProblem& P, int start, unsigned pattern, const Eigen::VectorXd* eta_seed,
                             const ControlOptions& opt, const Eigen::VectorXd* incumbent = nullptr) {
  StartResult r;
  r.start = start;
  r.pattern = pattern;
  Eigen::VectorXd x0;
  if (start >= opt.starts && incumbent)
    x0 = start_point(P, 0, incumbent, 0);
  else
    x0 = start_point(P, start, eta_seed,
                     derive_seed(opt.seed, {static_cast<std::uint64_t>(P.t), pattern, static_cast<std::uint64_t>(start)}));
  const auto restored = restore_feasibility(P, x0, opt);
  if (!restored) return r;
  r.run = sfscp_solve(P, restored->x, opt, &restored->eval);
  r.feasible = true;
  return r;
}

namespace detail {

// Higher f wins; within 1e-9, the lower start and then the lower pattern.
inline bool better(const StartResult& a, const StartResult& b) {
  if (!a.feasible) return false;
  if (!b.feasible) return true;
  const double fa = a.run.eval.f, fb = b.run.eval.f;
  if (std::abs(fa - fb) > 1e-9) return fa > fb;
  if (a.start != b.start) return a.start < b.start;
  return a.pattern < b.pattern;
}

inline int effective_starts(const ControlProblem& P, const ControlOptions& opt, bool incumbent = false) {
  if (opt.starts < 1) throw ValidationError("multi-start needs at least one start");
  if (P.n_eta() == 0) return 1;  // without valves every start is the same point
  return opt.starts + (incumbent ? 1 : 0);
}

}  // namespace detail

inline StartResult multi_start(const ControlProblem& P, const Eigen::VectorXd* eta_seed, const ControlOptions& opt = {},
                               unsigned pattern = 0) {
  const int M = detail::effective_starts(P, opt);
  std::vector<StartResult> runs(M);
  parallel_for(M, opt.threads, [&](std::size_t s) { runs[s] = run_start(P, static_cast<int>(s), pattern, eta_seed, opt); });
  StartResult best = runs[0];
  for (const auto& r : runs)
    if (detail::better(r, best)) best = r;
  if (!best.feasible) throw InfeasibleError("all " + std::to_string(M) + " starts failed feasibility restoration");
  return best;
}

struct ControlSolution {
  std::vector<int> dbv_links;  // DBVs in pattern-bit order
  std::vector<int> afv_nodes;
  std::vector<Eigen::VectorXd> eta, alpha;
  std::vector<HydraulicState> states;
  std::vector<double> f_t;         // weighted SCC per timestep
  std::vector<unsigned> pattern;   // per timestep
  std::vector<int> start;          // winning start per timestep
  std::vector<int> iterations, backtracks;
  std::vector<std::string> status;
  std::vector<std::vector<double>> f_history;
  std::vector<std::vector<SfscpTraceRow>> trace;
  double f = 0.0;                  // smooth SCC averaged over timesteps
  int patterns_per_t = 0;
  int runs = 0;
  int infeasible_runs = 0;

  // Flow direction of DBV k at timestep t.
  int direction(int t, std::size_t k) const { return (pattern[t] >> k) & 1u ? -1 : +1; }
};

// All 2^n_DBV direction patterns at every timestep, each with M starts plus the
// incumbent when one is given.
// Timesteps are decoupled, so the best pattern is chosen per timestep.
inline ControlSolution enumerate_dbv_directions(const NetworkModel& net, const HeadLossParams& hp, const SccParams& sp,
                                                const BoundSet& b, const std::vector<int>& dbv_links,
                                                const std::vector<int>& afv_nodes,
                                                const std::vector<Eigen::VectorXd>* eta_seed,
                                                const ControlOptions& opt = {},
                                                const std::vector<Eigen::VectorXd>* incumbent = nullptr) {
  ControlSolution out;
  out.dbv_links = dbv_set(net, dbv_links);
  out.afv_nodes = afv_nodes;
  const int nd = static_cast<int>(out.dbv_links.size());
  if (nd > opt.max_dbv)
    throw ValidationError(std::to_string(nd) + " DBVs need 2^" + std::to_string(nd) + " patterns; limit is " +
                          std::to_string(opt.max_dbv));
  const unsigned patterns = 1u << nd;
  const int nt = net.n_t();
  out.patterns_per_t = static_cast<int>(patterns);

  std::vector<ControlProblem> problems;
  for (int t = 0; t < nt; ++t)
    for (unsigned p = 0; p < patterns; ++p) problems.push_back(make_control_problem(net, hp, sp, b, t, dbv_links, afv_nodes, p));
  const int M = detail::effective_starts(problems.front(), opt, incumbent != nullptr);
  std::vector<StartResult> runs(problems.size() * M);
  parallel_for(runs.size(), opt.threads, [&](std::size_t i) {
    const auto& P = problems[i / M];
    const Eigen::VectorXd* seed = eta_seed ? &(*eta_seed).at(P.t) : nullptr;
    const Eigen::VectorXd* inc = incumbent ? &(*incumbent).at(P.t) : nullptr;
    runs[i] = run_start(P, static_cast<int>(i % M), static_cast<unsigned>((i / M) % patterns), seed, opt, inc);
  });
  out.runs = static_cast<int>(runs.size());
  for (int t = 0; t < nt; ++t) {
    const StartResult* best = nullptr;
    for (std::size_t i = static_cast<std::size_t>(t) * patterns * M; i < (t + 1) * patterns * M; ++i) {
      out.infeasible_runs += !runs[i].feasible;
      if (!best || detail::better(runs[i], *best)) best = &runs[i];
    }
    if (!best->feasible)
      throw InfeasibleError("no direction pattern admits a feasible operating point at timestep " + std::to_string(t));
    const auto& P = problems[static_cast<std::size_t>(t) * patterns + best->pattern];
    out.eta.push_back(P.eta_full(best->run.x));
    out.alpha.push_back(P.alpha_full(best->run.x));
    out.states.push_back(best->run.eval.state);
    out.f_t.push_back(best->run.eval.f);
    out.pattern.push_back(best->pattern);
    out.start.push_back(best->start);
    out.iterations.push_back(best->run.iterations);
    out.backtracks.push_back(best->run.backtracks);
    out.status.emplace_back(to_string(best->run.status));
    out.f_history.push_back(best->run.f_history);
    out.trace.push_back(best->run.trace);
  }
  out.f = scc_smooth(out.states, net, sp);
  return out;
}

inline nlohmann::json to_json(const ControlSolution& s, const NetworkModel& net) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t t = 0; t < s.states.size(); ++t) {
    nlohmann::json valves = nlohmann::json::array(), flush = nlohmann::json::array();
    for (std::size_t k = 0; k < s.dbv_links.size(); ++k) {
      const int j = s.dbv_links[k];
      valves.push_back({{"link", net.links[j].id}, {"eta_m", s.eta[t][j]}, {"direction", s.direction(static_cast<int>(t), k)}});
    }
    for (int j = 0; j < net.n_p(); ++j)
      if (net.links[j].is_existing_prv) valves.push_back({{"link", net.links[j].id}, {"eta_m", s.eta[t][j]}, {"direction", 1}, {"prv", true}});
    for (int i : s.afv_nodes) flush.push_back({{"node", net.nodes[i].id}, {"alpha_m3s", s.alpha[t][i]}});
    steps.push_back({{"t", t},
                     {"scc_smooth", s.f_t[t]},
                     {"pattern", s.pattern[t]},
                     {"start", s.start[t]},
                     {"iterations", s.iterations[t]},
                     {"backtracks", s.backtracks[t]},
                     {"status", s.status[t]},
                     {"valves", valves},
                     {"flushing", flush}});
  }
  return {{"scc_smooth", s.f}, {"runs", s.runs}, {"infeasible_runs", s.infeasible_runs},
          {"patterns_per_timestep", s.patterns_per_t}, {"timesteps", steps}};
}

inline void write_trace_csv(std::ostream& out, const ControlSolution& s) {
  out << "t,k,f,beta,mass_residual,energy_residual\n";
  for (std::size_t t = 0; t < s.trace.size(); ++t)
    for (const auto& r : s.trace[t])
      out << t << ',' << r.k << ',' << r.f << ',' << r.beta << ',' << r.mass_residual << ',' << r.energy_residual << '\n';
}

}  // namespace cms
