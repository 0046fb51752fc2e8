#pragma once

#include <chrono>
#include <vector>

#include <json.hpp>

#include "cms/relaxation.hpp"

namespace cms {

struct ObbtOptions {
  int k_max = 3;
  double eps_tol = 0.9;  // stop once diam(k+1) / diam(k) exceeds this
  // Tightened bounds are moved outward by this much (m^3/s) so LP tolerance
  // never cuts off a feasible flow.
  double safety = 1e-6;
  unsigned threads = 0;  // 0: hardware concurrency
  lp::LpOptions lp;
};

struct ObbtReport {
  int iterations = 0;
  std::vector<double> diam;         // diam[0] before tightening, then one per iteration
  std::vector<int> lp_solves;       // per iteration
  std::vector<int> warm_started;    // per iteration
  int core_links = 0;
  double seconds = 0.0;

  int total_solves() const {
    int s = 0;
    for (int n : lp_solves) s += n;
    return s;
  }
};

inline nlohmann::json to_json(const ObbtReport& r) {
  return {{"iterations", r.iterations},   {"diam", r.diam},
          {"lp_solves", r.lp_solves},     {"total_lp_solves", r.total_solves()},
          {"warm_started", r.warm_started}, {"core_links", r.core_links},
          {"wall_time_s", r.seconds}};
}

// Min/max flow LPs over the current relaxation for every core link and
// timestep. All LPs of one iteration see the same relaxation; bounds and
// envelopes are rebuilt between iterations. Earlier boxes are kept in the
// bound history so the envelopes only get tighter.
inline constexpr std::size_t kObbtChunk = 8;  // (timestep, link) pairs per warm-start chain

inline ObbtReport tighten(const NetworkModel& net, const HeadLossParams& hp, const SccParams& sp, BoundSet& bounds,
                          const DesignConfig& design, const ForestCoreDecomposition& fc, const ObbtOptions& opt = {}) {
  if (opt.k_max < 0 || !(opt.eps_tol > 0.0)) throw ValidationError("obbt: k_max must be >= 0 and eps_tol > 0");
  const auto start = std::chrono::steady_clock::now();
  ObbtReport rep;
  const auto& core = fc.core_links;
  rep.core_links = static_cast<int>(core.size());
  rep.diam.push_back(bounds.diameter(core));
  const int nt = bounds.n_t();
  const std::size_t items = static_cast<std::size_t>(nt) * core.size();

  double eps = 0.0;
  for (int k = 1; opt.eps_tol >= eps && k <= opt.k_max && items > 0; ++k) {
    auto rp = build_lp(net, hp, sp, bounds, design);
    std::fill(rp.lp.cost.begin(), rp.lp.cost.end(), 0.0);
    std::vector<double> lo(items), hi(items);
    std::vector<int> warm(items, 0);

    // Contiguous chunks of fixed size, each warm-starting from its own
    // previous basis. The split must not depend on the worker count, or the
    // bounds would differ in the last bits between thread settings.
    const std::size_t chunks = (items + kObbtChunk - 1) / kObbtChunk;
    parallel_for(chunks, opt.threads, [&](std::size_t c) {
      lp::LinearProgram prog = rp.lp;
      lp::Basis basis;
      const std::size_t first = c * kObbtChunk, last = std::min(items, first + kObbtChunk);
      for (std::size_t it = first; it < last; ++it) {
        const int t = static_cast<int>(it / core.size()), j = core[it % core.size()];
        const int col = rp.map.q(t, j);
        for (int dir : {+1, -1}) {  // minimize q, then maximize q
          prog.cost[col] = dir;
          const auto sol = lp::solve_lp(prog, opt.lp, basis.empty() ? nullptr : &basis);
          if (sol.status != lp::Status::Optimal)
            throw InfeasibleError("obbt: flow LP for link " + net.links[j].id + " at t=" + std::to_string(t) + " is " +
                                  lp::to_string(sol.status) + "; bounds are inconsistent upstream");
          warm[it] += sol.warm_started;
          (dir > 0 ? lo : hi)[it] = sol.x[col];
          basis = sol.basis;
        }
        prog.cost[col] = 0.0;
      }
    });

    bounds.q_history.push_back({bounds.q_lo, bounds.q_hi});
    for (std::size_t it = 0; it < items; ++it) {
      const int t = static_cast<int>(it / core.size()), j = core[it % core.size()];
      double l = std::max(bounds.q_lo[t][j], lo[it] - opt.safety);
      double u = std::min(bounds.q_hi[t][j], hi[it] + opt.safety);
      if (l > u) l = u = 0.5 * (l + u);
      bounds.q_lo[t][j] = l;
      bounds.q_hi[t][j] = u;
    }
    rep.lp_solves.push_back(static_cast<int>(2 * items));
    int w = 0;
    for (int x : warm) w += x;
    rep.warm_started.push_back(w);
    rep.diam.push_back(bounds.diameter(core));
    rep.iterations = k;
    const double prev = rep.diam[rep.diam.size() - 2];
    eps = prev > 0.0 ? rep.diam.back() / prev : kInf;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace cms
