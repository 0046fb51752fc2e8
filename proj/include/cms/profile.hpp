#pragma once

// Performance profiles for comparing solvers over a set of experiments.
// Costs are "smaller is better"; a failed run is encoded as +infinity.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>

#include "cms/common.hpp"

namespace cms {

struct PerformanceProfile {
  std::vector<std::string> solvers;
  std::vector<std::vector<double>> ratios;  // [experiment][solver], +inf on failure
  std::vector<double> taus;                 // breakpoints: every finite ratio, ascending

  // Fraction of experiments solver s solved within a factor tau of the best.
  double rho(std::size_t s, double tau) const {
    if (ratios.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& r : ratios) hit += r[s] <= tau;
    return static_cast<double>(hit) / static_cast<double>(ratios.size());
  }
};

// f[x][s] is the cost of solver s on experiment x.
inline PerformanceProfile performance_profile(const std::vector<std::vector<double>>& f,
                                              std::vector<std::string> solvers = {}) {
  if (f.empty() || f.front().empty()) throw ValidationError("profile needs at least one experiment and one solver");
  const std::size_t ns = f.front().size();
  if (solvers.empty())
    for (std::size_t s = 0; s < ns; ++s) solvers.push_back("solver_" + std::to_string(s));
  if (solvers.size() != ns) throw ValidationError("solver names do not match the result columns");

  PerformanceProfile p;
  p.solvers = std::move(solvers);
  for (const auto& row : f) {
    if (row.size() != ns) throw ValidationError("ragged result matrix");
    double best = kInf;
    for (double v : row) {
      if (std::isnan(v) || v <= 0.0) throw ValidationError("profile costs must be positive or +inf");
      best = std::min(best, v);
    }
    std::vector<double> r(ns, kInf);
    if (std::isfinite(best))
      for (std::size_t s = 0; s < ns; ++s) r[s] = row[s] / best;
    for (double v : r)
      if (std::isfinite(v)) p.taus.push_back(v);
    p.ratios.push_back(std::move(r));
  }
  std::sort(p.taus.begin(), p.taus.end());
  p.taus.erase(std::unique(p.taus.begin(), p.taus.end()), p.taus.end());
  return p;
}

// One row per breakpoint: tau followed by rho_s(tau) for every solver.
inline void write_profile_csv(std::ostream& out, const PerformanceProfile& p) {
  out << "tau";
  for (const auto& s : p.solvers) out << ',' << s;
  out << '\n';
  out.precision(12);
  for (double tau : p.taus) {
    out << tau;
    for (std::size_t s = 0; s < p.solvers.size(); ++s) out << ',' << p.rho(s, tau);
    out << '\n';
  }
}

// Reads a header of solver names and one row of costs per experiment. Empty
// cells and "inf"/"fail" mark failures.
inline std::vector<std::vector<double>> read_results_csv(std::istream& in, std::vector<std::string>& solvers) {
  std::string line;
  int line_no = 0;
  std::vector<std::vector<double>> f;
  solvers.clear();
  while (std::getline(in, line)) {
    ++line_no;
    boost::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    boost::split(cells, line, boost::is_any_of(","));
    for (auto& c : cells) boost::trim(c);
    if (solvers.empty()) {
      solvers = cells;
      continue;
    }
    if (cells.size() != solvers.size()) throw ParseError("expected " + std::to_string(solvers.size()) + " cells", line_no);
    std::vector<double> row;
    for (const auto& c : cells) {
      const auto lc = boost::to_lower_copy(c);
      if (lc.empty() || lc == "inf" || lc == "+inf" || lc == "fail") {
        row.push_back(kInf);
        continue;
      }
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + c + "'", line_no);
      }
    }
    f.push_back(std::move(row));
  }
  if (solvers.empty()) throw ParseError("empty results file", 0);
  return f;
}

}  // namespace cms
