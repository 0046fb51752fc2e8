#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <ostream>
#include <vector>

#include "cms/netmodel.hpp"

namespace cms {

inline constexpr double kHwExponent = 1.852;
inline constexpr double kDefaultQEps = 1e-6;

struct HeadLossParams {
  Eigen::VectorXd r;      // resistance
  Eigen::VectorXd n_exp;  // 1.852 pipes, 2 valves
  double q_eps = kDefaultQEps;
};

inline double hw_resistance(double length, double c, double diameter) {
  return 10.67 * length / (std::pow(c, kHwExponent) * std::pow(diameter, 4.871));
}

inline double valve_resistance(double k, double diameter) {
  return 8.0 * k / (kGravity * std::numbers::pi * std::numbers::pi * std::pow(diameter, 4));
}

inline HeadLossParams headloss_params(const NetworkModel& net, double q_eps = kDefaultQEps) {
  HeadLossParams p;
  p.r.resize(net.n_p());
  p.n_exp.resize(net.n_p());
  p.q_eps = q_eps;
  for (int j = 0; j < net.n_p(); ++j) {
    const auto& l = net.links[j];
    if (l.kind == LinkKind::Pipe) {
      p.r[j] = hw_resistance(l.length, l.hw_coefficient, l.diameter);
      p.n_exp[j] = kHwExponent;
    } else {
      p.r[j] = valve_resistance(l.valve_loss, l.diameter);
      p.n_exp[j] = 2.0;
    }
  }
  return p;
}

// phi(q) = r |q|^(n-1) q, replaced on |q| <= eps by the odd cubic a q + b q^3
// that matches value and slope at +-eps, so phi' > 0 at the origin.
inline double phi(double q, double r, double n, double eps = kDefaultQEps) {
  const double aq = std::abs(q);
  if (aq > eps || eps <= 0.0) return r * std::pow(aq, n - 1.0) * q;
  const double a = r * std::pow(eps, n - 1.0) * (3.0 - n) / 2.0;
  const double b = r * std::pow(eps, n - 3.0) * (n - 1.0) / 2.0;
  return a * q + b * q * q * q;
}

inline double phi_prime(double q, double r, double n, double eps = kDefaultQEps) {
  const double aq = std::abs(q);
  if (aq > eps || eps <= 0.0) return r * n * std::pow(aq, n - 1.0);
  const double a = r * std::pow(eps, n - 1.0) * (3.0 - n) / 2.0;
  const double b = r * std::pow(eps, n - 3.0) * (n - 1.0) / 2.0;
  return a + 3.0 * b * q * q;
}

inline double phi(double q, const HeadLossParams& p, int j) { return phi(q, p.r[j], p.n_exp[j], p.q_eps); }
inline double phi_prime(double q, const HeadLossParams& p, int j) { return phi_prime(q, p.r[j], p.n_exp[j], p.q_eps); }

struct HydraulicOptions {
  int max_newton = 50;
  double tol_mass = 1e-8;    // m^3/s
  double tol_energy = 1e-6;  // m
  bool record_history = false;
};

// One timestep of hydraulic state. Closed links carry q = theta = 0 and are
// excluded from the energy residual.
struct HydraulicState {
  Eigen::VectorXd q, h, theta, eta, alpha;
  std::vector<char> closed;
  int iterations = 0;
  std::vector<std::pair<double, double>> history;  // (mass, energy) per iteration
};

namespace detail {

inline double mass_residual(const NetworkModel& net, const Eigen::SparseMatrix<double>& a12, const Eigen::VectorXd& q,
                            int t, const Eigen::VectorXd& alpha) {
  if (net.n_n() == 0) return 0.0;
  return (a12.transpose() * q - net.demands[t] - alpha).lpNorm<Eigen::Infinity>();
}

inline Eigen::VectorXd energy_vector(const NetworkModel& net, const HeadLossParams& p,
                                     const Eigen::SparseMatrix<double>& a12, const Eigen::SparseMatrix<double>& a10,
                                     const Eigen::VectorXd& q, const Eigen::VectorXd& h, int t,
                                     const Eigen::VectorXd& eta, const std::vector<char>& closed) {
  Eigen::VectorXd e = a12 * h + a10 * net.source_heads[t] + eta;
  for (int j = 0; j < net.n_p(); ++j) e[j] = closed[j] ? 0.0 : e[j] + phi(q[j], p, j);
  return e;
}

}  // namespace detail

inline double mass_residual(const NetworkModel& net, const HydraulicState& s, int t) {
  return detail::mass_residual(net, net.A12(), s.q, t, s.alpha);
}

inline double energy_residual(const NetworkModel& net, const HeadLossParams& p, const HydraulicState& s, int t) {
  if (net.n_p() == 0) return 0.0;
  return detail::energy_vector(net, p, net.A12(), net.A10(), s.q, s.h, t, s.eta, s.closed).lpNorm<Eigen::Infinity>();
}

// Newton iteration on the (q, h) system, eliminating q through the Schur
// complement A12^T D^-1 A12 with D = diag(phi'(q)). Steps are halved while the
// scaled residual grows.
inline HydraulicState solve_steady(const NetworkModel& net, const HeadLossParams& p, int t, const Eigen::VectorXd& eta,
                                   const Eigen::VectorXd& alpha, const std::vector<char>& closed_in = {},
                                   const HydraulicOptions& opt = {}, const HydraulicState* warm = nullptr) {
  const int np = net.n_p(), nn = net.n_n();
  if (t < 0 || t >= net.n_t()) throw ValidationError("timestep out of range");
  if (eta.size() != np || alpha.size() != nn) throw ValidationError("control vector size mismatch");
  std::vector<char> closed = closed_in.empty() ? std::vector<char>(np, 0) : closed_in;
  if (static_cast<int>(closed.size()) != np) throw ValidationError("closed-link mask size mismatch");
  if (!detail::unreachable_nodes(net, &closed).empty())
    throw SingularSystem("closed links disconnect a demand node from every source");

  const auto a12 = net.A12();
  const auto a10 = net.A10();
  HydraulicState s;
  s.eta = eta;
  s.alpha = alpha;
  s.closed = closed;
  if (warm && warm->q.size() == np && warm->h.size() == nn) {
    s.q = warm->q;
    s.h = warm->h;
  } else {
    s.q.resize(np);
    for (int j = 0; j < np; ++j) s.q[j] = 0.03 * net.links[j].area;
    s.h = Eigen::VectorXd::Constant(nn, net.source_heads[t].size() ? net.source_heads[t].maxCoeff() : 0.0);
  }
  for (int j = 0; j < np; ++j)
    if (closed[j]) s.q[j] = 0.0;

  auto merit = [&](double m, double e) { return std::max(m / opt.tol_mass, e / opt.tol_energy); };
  auto evaluate = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& h, Eigen::VectorXd& e_vec, Eigen::VectorXd& m_vec) {
    e_vec = detail::energy_vector(net, p, a12, a10, q, h, t, eta, closed);
    m_vec = a12.transpose() * q - net.demands[t] - alpha;
    return std::make_pair(m_vec.size() ? m_vec.lpNorm<Eigen::Infinity>() : 0.0,
                          e_vec.size() ? e_vec.lpNorm<Eigen::Infinity>() : 0.0);
  };

  Eigen::VectorXd e_vec, m_vec;
  auto [mres, eres] = evaluate(s.q, s.h, e_vec, m_vec);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;
  Eigen::VectorXd dinv(np);
  for (int it = 0; it <= opt.max_newton; ++it) {
    if (opt.record_history) s.history.emplace_back(mres, eres);
    if (mres <= opt.tol_mass && eres <= opt.tol_energy) {
      s.iterations = it;
      s.theta.resize(np);
      for (int j = 0; j < np; ++j) s.theta[j] = closed[j] ? 0.0 : phi(s.q[j], p, j);
      return s;
    }
    if (it == opt.max_newton) break;
    for (int j = 0; j < np; ++j) dinv[j] = closed[j] ? 0.0 : 1.0 / std::max(phi_prime(s.q[j], p, j), 1e-7);
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(nn);
    if (nn > 0) {
      Eigen::SparseMatrix<double> schur = a12.transpose() * dinv.asDiagonal() * a12;
      if (!analyzed) {
        ldlt.analyzePattern(schur);
        analyzed = true;
      }
      ldlt.factorize(schur);
      if (ldlt.info() != Eigen::Success) throw SingularSystem("reduced hydraulic system is singular");
      const Eigen::VectorXd rhs = m_vec - a12.transpose() * (dinv.asDiagonal() * e_vec);
      dh = ldlt.solve(rhs);
      if (!dh.allFinite()) throw SingularSystem("reduced hydraulic system is singular");
    }
    const Eigen::VectorXd dq = -(dinv.asDiagonal() * (e_vec + a12 * dh));
    const double m0 = merit(mres, eres);
    double step = 1.0;
    Eigen::VectorXd qn, hn, en, mn;
    std::pair<double, double> res;
    for (int halving = 0; halving < 12; ++halving) {
      qn = s.q + step * dq;
      hn = s.h + step * dh;
      res = evaluate(qn, hn, en, mn);
      if (merit(res.first, res.second) <= m0) break;
      step *= 0.5;
    }
    s.q = std::move(qn);
    s.h = std::move(hn);
    e_vec = std::move(en);
    m_vec = std::move(mn);
    mres = res.first;
    eres = res.second;
  }
  throw NonConvergence("Newton solver did not converge in " + std::to_string(opt.max_newton) +
                       " iterations (mass " + std::to_string(mres) + ", energy " + std::to_string(eres) + ")");
}

// Solves every timestep; controls are given per timestep.
inline std::vector<HydraulicState> simulate(const NetworkModel& net, const HeadLossParams& p,
                                            const std::vector<Eigen::VectorXd>& eta,
                                            const std::vector<Eigen::VectorXd>& alpha,
                                            const std::vector<std::vector<char>>& closed = {},
                                            const HydraulicOptions& opt = {}, unsigned threads = 1) {
  std::vector<HydraulicState> out(net.n_t());
  parallel_for(static_cast<std::size_t>(net.n_t()), threads, [&](std::size_t t) {
    out[t] = solve_steady(net, p, static_cast<int>(t), eta[t], alpha[t], closed.empty() ? std::vector<char>{} : closed[t], opt);
  });
  return out;
}

inline std::vector<HydraulicState> simulate_uncontrolled(const NetworkModel& net, const HeadLossParams& p,
                                                         const HydraulicOptions& opt = {}) {
  return simulate(net, p, std::vector<Eigen::VectorXd>(net.n_t(), Eigen::VectorXd::Zero(net.n_p())),
                  std::vector<Eigen::VectorXd>(net.n_t(), Eigen::VectorXd::Zero(net.n_n())), {}, opt);
}

inline void write_residual_history(std::ostream& out, const HydraulicState& s) {
  out << "iteration,mass_residual,energy_residual\n";
  for (std::size_t k = 0; k < s.history.size(); ++k)
    out << k << ',' << s.history[k].first << ',' << s.history[k].second << '\n';
}

}  // namespace cms
