#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "cms/hydraulics.hpp"
#include "cms/netmodel.hpp"

namespace cms {

struct SccParams {
  Eigen::VectorXd u_min;  // per link, m/s
  double rho = 50.0;
  Eigen::VectorXd w;  // per link, sums to 1 over the objective subset
};

// Length weights over pipe links, optionally restricted to `subset`.
// Valves never carry weight.
inline SccParams make_scc_params(const NetworkModel& net, double rho = 50.0, double u_min = 0.2,
                                 const std::optional<std::vector<int>>& subset = std::nullopt) {
  if (!(rho > 0.0) || !(u_min > 0.0)) throw ValidationError("rho and u_min must be positive");
  SccParams p;
  p.rho = rho;
  p.u_min = Eigen::VectorXd::Constant(net.n_p(), u_min);
  p.w = Eigen::VectorXd::Zero(net.n_p());
  std::vector<char> in(net.n_p(), subset ? 0 : 1);
  if (subset)
    for (int j : *subset) {
      if (j < 0 || j >= net.n_p()) throw ValidationError("objective subset index out of range");
      in[j] = 1;
    }
  double total = 0.0;
  for (int j = 0; j < net.n_p(); ++j)
    if (in[j] && net.links[j].kind == LinkKind::Pipe) total += net.links[j].length;
  if (!(total > 0.0)) throw ValidationError("objective subset contains no pipe length");
  for (int j = 0; j < net.n_p(); ++j)
    if (in[j] && net.links[j].kind == LinkKind::Pipe) p.w[j] = net.links[j].length / total;
  return p;
}

// Logistic 1/(1+e^-x) without overflow for large |x|.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double psi_plus(double u, double u_min, double rho) { return logistic(rho * (u - u_min)); }
inline double psi_minus(double u, double u_min, double rho) { return logistic(rho * (-u - u_min)); }

inline double psi_plus_prime(double u, double u_min, double rho) {
  const double s = psi_plus(u, u_min, rho);
  return rho * s * (1.0 - s);
}

inline double psi_minus_prime(double u, double u_min, double rho) {
  const double s = psi_minus(u, u_min, rho);
  return -rho * s * (1.0 - s);
}

// Objective on raw flows, one vector per timestep.
inline double scc_smooth_flows(const std::vector<Eigen::VectorXd>& q, const NetworkModel& net, const SccParams& p) {
  double f = 0.0;
  for (const auto& qt : q)
    for (int j = 0; j < net.n_p(); ++j) {
      if (p.w[j] == 0.0) continue;
      const double u = qt[j] / net.links[j].area;
      f += p.w[j] * (psi_plus(u, p.u_min[j], p.rho) + psi_minus(u, p.u_min[j], p.rho));
    }
  return q.empty() ? 0.0 : f / static_cast<double>(q.size());
}

inline std::vector<Eigen::VectorXd> scc_smooth_grad_flows(const std::vector<Eigen::VectorXd>& q, const NetworkModel& net,
                                                          const SccParams& p) {
  std::vector<Eigen::VectorXd> g;
  const double scale = q.empty() ? 0.0 : 1.0 / static_cast<double>(q.size());
  for (const auto& qt : q) {
    Eigen::VectorXd gt = Eigen::VectorXd::Zero(net.n_p());
    for (int j = 0; j < net.n_p(); ++j) {
      if (p.w[j] == 0.0) continue;
      const double a = net.links[j].area;
      const double u = qt[j] / a;
      gt[j] = scale * p.w[j] * (psi_plus_prime(u, p.u_min[j], p.rho) + psi_minus_prime(u, p.u_min[j], p.rho)) / a;
    }
    g.push_back(std::move(gt));
  }
  return g;
}

inline std::vector<Eigen::VectorXd> flows_of(const std::vector<HydraulicState>& states) {
  std::vector<Eigen::VectorXd> q;
  q.reserve(states.size());
  for (const auto& s : states) q.push_back(s.q);
  return q;
}

inline double scc_smooth(const std::vector<HydraulicState>& states, const NetworkModel& net, const SccParams& p) {
  return scc_smooth_flows(flows_of(states), net, p);
}

inline std::vector<Eigen::VectorXd> scc_smooth_grad(const std::vector<HydraulicState>& states, const NetworkModel& net,
                                                    const SccParams& p) {
  return scc_smooth_grad_flows(flows_of(states), net, p);
}

inline double scc_indicator_flows(const std::vector<Eigen::VectorXd>& q, const NetworkModel& net, const SccParams& p) {
  double f = 0.0;
  for (const auto& qt : q)
    for (int j = 0; j < net.n_p(); ++j)
      if (std::abs(qt[j] / net.links[j].area) > p.u_min[j]) f += p.w[j];
  return q.empty() ? 0.0 : f / static_cast<double>(q.size());
}

inline double scc_indicator(const std::vector<HydraulicState>& states, const NetworkModel& net, const SccParams& p) {
  return scc_indicator_flows(flows_of(states), net, p);
}

// Node weights: half the length of each incident link, normalized over
// demand nodes. Falls back to uniform weights when no pipe touches a node.
inline Eigen::VectorXd azp_weights(const NetworkModel& net) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(net.n_n());
  for (const auto& l : net.links) {
    if (!l.from.source) w[l.from.index] += 0.5 * l.length;
    if (!l.to.source) w[l.to.index] += 0.5 * l.length;
  }
  const double total = w.sum();
  if (total > 0.0) return w / total;
  return Eigen::VectorXd::Constant(net.n_n(), net.n_n() ? 1.0 / net.n_n() : 0.0);
}

inline double azp(const std::vector<HydraulicState>& states, const NetworkModel& net) {
  const Eigen::VectorXd w = azp_weights(net);
  const Eigen::VectorXd elev = net.elevations();
  double total = 0.0;
  for (const auto& s : states) total += w.dot(s.h - elev);
  return states.empty() ? 0.0 : total / static_cast<double>(states.size());
}

struct CdfPoint {
  int link = -1;
  double velocity = 0.0;
  double cum_fraction = 0.0;
};

// Per-link peak |velocity| over timesteps, sorted ascending, with cumulative
// objective weight. Links sharing a velocity share the group's cumulative value.
inline std::vector<CdfPoint> velocity_cdf(const std::vector<HydraulicState>& states, const NetworkModel& net,
                                          const SccParams& p) {
  std::vector<CdfPoint> pts;
  for (int j = 0; j < net.n_p(); ++j) {
    if (p.w[j] == 0.0) continue;
    double vmax = 0.0;
    for (const auto& s : states) vmax = std::max(vmax, std::abs(s.q[j] / net.links[j].area));
    pts.push_back({j, vmax, 0.0});
  }
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.velocity < b.velocity; });
  double cum = 0.0;
  for (std::size_t k = 0; k < pts.size();) {
    std::size_t e = k;
    while (e < pts.size() && pts[e].velocity == pts[k].velocity) cum += p.w[pts[e++].link];
    for (std::size_t m = k; m < e; ++m) pts[m].cum_fraction = cum;
    k = e;
  }
  return pts;
}

inline double cdf_at(const std::vector<CdfPoint>& cdf, double u) {
  double v = 0.0;
  for (const auto& pt : cdf)
    if (pt.velocity <= u) v = pt.cum_fraction;
  return v;
}

inline void write_velocity_cdf(std::ostream& out, const std::vector<CdfPoint>& cdf, const NetworkModel& net) {
  out << "link_id,max_velocity_mps,cum_length_fraction\n";
  out.precision(12);
  for (const auto& pt : cdf) out << net.links[pt.link].id << ',' << pt.velocity << ',' << pt.cum_fraction << '\n';
}

}  // namespace cms
