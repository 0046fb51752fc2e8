#pragma once

#include <Eigen/Core>

#include <random>
#include <set>
#include <vector>

#include "cms/common.hpp"

namespace cms {

struct CandidateDesign {
  std::vector<int> afv_nodes;  // sorted, size n_f
  std::vector<int> dbv_links;  // sorted, size n_v
  int index = 0;               // order of discovery

  friend bool operator==(const CandidateDesign& a, const CandidateDesign& b) {
    return a.afv_nodes == b.afv_nodes && a.dbv_links == b.dbv_links;
  }
};

inline int default_sample_count(int n_p) { return n_p <= 500 ? 50 : 100; }

namespace detail {

// Draws k distinct indices with probability proportional to the remaining
// weights, renormalizing after each pick.
template <typename Engine>
std::vector<int> weighted_without_replacement(const Eigen::VectorXd& w, int k, Engine& eng) {
  std::vector<double> left(w.data(), w.data() + w.size());
  std::vector<int> out;
  out.reserve(k);
  for (int s = 0; s < k; ++s) {
    double total = 0.0;
    for (double x : left) total += x;
    double r = uniform01(eng) * total;
    int pick = -1;
    for (std::size_t i = 0; i < left.size(); ++i) {
      if (left[i] <= 0.0) continue;
      pick = static_cast<int>(i);
      if (r < left[i]) break;
      r -= left[i];
    }
    out.push_back(pick);
    left[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline int support_size(const Eigen::VectorXd& w) { return static_cast<int>((w.array() > 0.0).count()); }

// Binomial coefficient saturating at `cap`.
inline double choose_capped(int n, int k, double cap) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap;
  }
  return std::round(c);
}

}  // namespace detail

// Samples up to n_samples distinct valve placements from fractional LP values.
// Gives fewer only when the support has fewer combinations or the redraw cap
// (1000 draws per requested design) runs out.
inline std::vector<CandidateDesign> sample_designs(const Eigen::VectorXd& y, const Eigen::VectorXd& z, int n_v, int n_f,
                                                   int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("sample count must be at least 1");
  if (n_v < 0 || n_f < 0) throw ValidationError("valve counts must be non-negative");
  if ((y.array() < 0.0).any() || (z.array() < 0.0).any() || !y.allFinite() || !z.allFinite())
    throw ValidationError("fractional placements must be finite and non-negative");
  if (detail::support_size(y) < n_f)
    throw ZeroSupport("only " + std::to_string(detail::support_size(y)) + " nodes have positive weight for " +
                      std::to_string(n_f) + " flushing valves");
  if (detail::support_size(z) < n_v)
    throw ZeroSupport("only " + std::to_string(detail::support_size(z)) + " links have positive weight for " +
                      std::to_string(n_v) + " control valves");

  std::vector<CandidateDesign> out;
  if (n_v == 0 && n_f == 0) {
    out.push_back({});  // the only configuration there is
    return out;
  }
  const double combos = detail::choose_capped(detail::support_size(y), n_f, 1e18) *
                        detail::choose_capped(detail::support_size(z), n_v, 1e18);
  const auto target = static_cast<std::size_t>(std::min<double>(n_samples, combos));
  std::mt19937_64 eng(mix_seed(seed));
  std::set<std::pair<std::vector<int>, std::vector<int>>> visited;
  const long long max_draws = 1000LL * n_samples;
  for (long long draw = 0; draw < max_draws && out.size() < target; ++draw) {
    CandidateDesign d;
    d.afv_nodes = detail::weighted_without_replacement(y, n_f, eng);
    d.dbv_links = detail::weighted_without_replacement(z, n_v, eng);
    if (!visited.insert({d.afv_nodes, d.dbv_links}).second) continue;
    d.index = static_cast<int>(out.size());
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace cms
