#pragma once

// Reader and writer for the subset of the EPANET INP format needed for
// steady-state snapshot networks: junctions, reservoirs, pipes, TCV/PRV
// valves, demand categories, patterns, coordinates, times and options.

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>

#include "cms/netmodel.hpp"

namespace cms {

struct InpOptions {
  // Pattern periods to snapshot. Empty selects the `peak_count` periods with
  // the largest total demand (ties to the earlier period), in period order.
  std::vector<int> timesteps;
  int peak_count = 4;
};

namespace inp_detail {

struct Units {
  double flow = 1e-3;  // to m^3/s
  double length = 1.0;  // to m
  double diameter = 1e-3;  // to m
};

inline Units units_for(const std::string& name, int line) {
  static const std::map<std::string, double> si = {
      {"LPS", 1e-3}, {"LPM", 1.0 / 60000.0}, {"MLD", 1000.0 / 86400.0}, {"CMH", 1.0 / 3600.0}, {"CMD", 1.0 / 86400.0}};
  static const std::map<std::string, double> us = {{"CFS", 0.028316846592},
                                                   {"GPM", 3.785411784e-3 / 60.0},
                                                   {"MGD", 3785.411784 / 86400.0},
                                                   {"IMGD", 4546.09 / 86400.0},
                                                   {"AFD", 1233.48183754752 / 86400.0}};
  if (auto it = si.find(name); it != si.end()) return {it->second, 1.0, 1e-3};
  if (auto it = us.find(name); it != us.end()) return {it->second, 0.3048, 0.0254};
  throw ParseError("unknown flow units '" + name + "'", line);
}

inline double number(const std::string& tok, int line) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError("expected a number, got '" + tok + "'", line);
  return v;
}

struct RawLink {
  std::string id, n1, n2;
  int line;
  double length = 0, diameter = 0, rough = 0, minor = 0, setting = 0;
  std::string valve_type;  // empty for pipes
};

struct DemandEntry {
  double base;
  std::string pattern;
};

}  // namespace inp_detail

inline NetworkModel parse_inp(std::istream& in, const InpOptions& opt = {}, std::vector<std::string>* warnings = nullptr) {
  using namespace inp_detail;
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  struct Junction {
    std::string id;
    double elev;
    std::vector<DemandEntry> line_demand, section_demand;
    int line;
  };
  struct Reservoir {
    std::string id;
    double head;
    std::string pattern;
  };
  std::vector<Junction> junctions;
  std::vector<Reservoir> reservoirs;
  std::vector<RawLink> raw_links;
  std::vector<std::tuple<std::string, std::string, std::string>> pumps;
  std::map<std::string, std::vector<double>> patterns;
  std::vector<std::string> pattern_order;
  std::map<std::string, std::pair<double, double>> coords;
  std::set<std::string> dbv_tags;
  std::vector<std::tuple<std::string, DemandEntry, int>> demand_lines;
  std::string units_name = "GPM";  // EPANET default
  std::string headloss = "H-W";
  std::string default_pattern;
  double demand_multiplier = 1.0;

  std::string section;
  std::string raw;
  int line_no = 0;
  std::set<std::string> warned_sections;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto c = raw.find(';'); c != std::string::npos) raw.erase(c);
    boost::trim(raw);
    if (raw.empty()) continue;
    if (raw.front() == '[') {
      const auto close = raw.find(']');
      if (close == std::string::npos) throw ParseError("unterminated section header", line_no);
      section = boost::to_upper_copy(raw.substr(1, close - 1));
      static const std::set<std::string> known = {"TITLE",    "JUNCTIONS", "RESERVOIRS", "PIPES",   "VALVES",
                                                  "DEMANDS",  "PATTERNS",  "COORDINATES", "TIMES",  "OPTIONS",
                                                  "END",      "PUMPS",     "TAGS",       "VERTICES", "LABELS"};
      if (!known.count(section) || section == "PUMPS") {
        if (warned_sections.insert(section).second) warn("unsupported section ignored: [" + section + "]");
      }
      continue;
    }
    std::vector<std::string> tok;
    boost::split(tok, raw, boost::is_any_of(" \t"), boost::token_compress_on);
    auto need = [&](std::size_t n) {
      if (tok.size() < n) throw ParseError("[" + section + "] expects at least " + std::to_string(n) + " fields", line_no);
    };
    if (section == "JUNCTIONS") {
      need(2);
      Junction j{tok[0], number(tok[1], line_no), {}, {}, line_no};
      if (tok.size() >= 3) j.line_demand.push_back({number(tok[2], line_no), tok.size() >= 4 ? tok[3] : ""});
      junctions.push_back(std::move(j));
    } else if (section == "RESERVOIRS") {
      need(2);
      reservoirs.push_back({tok[0], number(tok[1], line_no), tok.size() >= 3 ? tok[2] : ""});
    } else if (section == "PIPES") {
      need(6);
      RawLink l{tok[0], tok[1], tok[2], line_no};
      l.length = number(tok[3], line_no);
      l.diameter = number(tok[4], line_no);
      l.rough = number(tok[5], line_no);
      if (tok.size() >= 7) l.minor = number(tok[6], line_no);
      if (tok.size() >= 8) {
        const auto status = boost::to_upper_copy(tok[7]);
        if (status == "CLOSED") {
          warn("closed pipe " + l.id + " dropped");
          continue;
        }
        if (status == "CV") warn("check valve on pipe " + l.id + " ignored");
      }
      raw_links.push_back(l);
    } else if (section == "VALVES") {
      need(6);
      RawLink l{tok[0], tok[1], tok[2], line_no};
      l.diameter = number(tok[3], line_no);
      l.valve_type = boost::to_upper_copy(tok[4]);
      l.setting = number(tok[5], line_no);
      if (tok.size() >= 7) l.minor = number(tok[6], line_no);
      if (l.valve_type != "TCV" && l.valve_type != "PRV")
        throw ParseError("unsupported valve type " + l.valve_type + " on valve " + l.id, line_no);
      raw_links.push_back(l);
    } else if (section == "DEMANDS") {
      need(2);
      demand_lines.emplace_back(tok[0], DemandEntry{number(tok[1], line_no), tok.size() >= 3 ? tok[2] : ""}, line_no);
    } else if (section == "PATTERNS") {
      need(2);
      if (!patterns.count(tok[0])) pattern_order.push_back(tok[0]);
      auto& p = patterns[tok[0]];
      for (std::size_t k = 1; k < tok.size(); ++k) p.push_back(number(tok[k], line_no));
    } else if (section == "COORDINATES") {
      need(3);
      coords[tok[0]] = {number(tok[1], line_no), number(tok[2], line_no)};
    } else if (section == "OPTIONS") {
      const auto key = boost::to_upper_copy(tok[0]);
      if (key == "UNITS") {
        need(2);
        units_name = boost::to_upper_copy(tok[1]);
      } else if (key == "HEADLOSS") {
        need(2);
        headloss = boost::to_upper_copy(tok[1]);
        if (headloss != "H-W")
          throw ParseError("headloss formula " + headloss + " is not supported; only H-W", line_no);
      } else if (key == "PATTERN") {
        need(2);
        default_pattern = tok[1];
      } else if (key == "DEMAND" && tok.size() >= 3 && boost::iequals(tok[1], "MULTIPLIER")) {
        demand_multiplier = number(tok[2], line_no);
      }
    } else if (section == "TAGS") {
      if (tok.size() >= 3 && boost::iequals(tok[0], "LINK") && boost::iequals(tok[2], "DBV")) dbv_tags.insert(tok[1]);
    } else if (section == "PUMPS") {
      if (tok.size() >= 3) pumps.emplace_back(tok[0], tok[1], tok[2]);
    }
    // TITLE, TIMES, END, VERTICES, LABELS and unknown sections carry nothing we use.
  }

  const Units u = units_for(units_name, 0);
  if (default_pattern.empty() && patterns.count("1")) default_pattern = "1";

  NetworkModel net;
  std::map<std::string, NodeRef> ids;
  for (std::size_t i = 0; i < junctions.size(); ++i) {
    if (!ids.emplace(junctions[i].id, NodeRef{false, static_cast<int>(i)}).second)
      throw ParseError("duplicate node id " + junctions[i].id, junctions[i].line);
    DemandNode n{junctions[i].id, junctions[i].elev * u.length, std::nullopt};
    if (auto c = coords.find(n.id); c != coords.end()) n.coordinates = c->second;
    net.nodes.push_back(std::move(n));
  }
  for (std::size_t k = 0; k < reservoirs.size(); ++k) {
    if (!ids.emplace(reservoirs[k].id, NodeRef{true, static_cast<int>(k)}).second)
      throw ParseError("duplicate node id " + reservoirs[k].id, 0);
    SourceNode s{reservoirs[k].id, std::nullopt};
    if (auto c = coords.find(s.id); c != coords.end()) s.coordinates = c->second;
    net.sources.push_back(std::move(s));
  }
  for (const auto& [id, entry, line] : demand_lines) {
    const auto it = ids.find(id);
    if (it == ids.end() || it->second.source) throw ParseError("demand for unknown junction " + id, line);
    junctions[it->second.index].section_demand.push_back(entry);
  }
  for (const auto& r : raw_links) {
    auto a = ids.find(r.n1), b = ids.find(r.n2);
    if (a == ids.end() || b == ids.end())
      throw ParseError("link " + r.id + " references unknown node " + (a == ids.end() ? r.n1 : r.n2), r.line);
    if (r.valve_type.empty()) {
      if (r.minor != 0.0) warn("minor loss on pipe " + r.id + " ignored");
      net.links.push_back(make_pipe(r.id, a->second, b->second, r.length * u.length, r.diameter * u.diameter, r.rough));
    } else {
      const bool prv = r.valve_type == "PRV";
      const double k = prv ? r.minor : r.setting;
      net.links.push_back(make_valve(r.id, a->second, b->second, r.diameter * u.diameter, k, prv));
    }
    if (dbv_tags.count(r.id)) net.links.back().is_existing_dbv = true;
  }

  // Pattern horizon: the longest referenced pattern; constant networks have 1.
  auto multiplier = [&](const std::string& name, int period) -> double {
    const std::string& p = name.empty() ? default_pattern : name;
    if (p.empty()) return 1.0;
    const auto it = patterns.find(p);
    if (it == patterns.end()) throw ParseError("unknown pattern " + p, 0);
    if (it->second.empty()) return 1.0;
    return it->second[period % it->second.size()];
  };
  std::size_t horizon = 1;
  for (const auto& [name, p] : patterns) horizon = std::max(horizon, p.size());

  auto node_demand = [&](const Junction& j, int period) {
    const auto& entries = j.section_demand.empty() ? j.line_demand : j.section_demand;
    double d = 0.0;
    for (const auto& e : entries) d += e.base * multiplier(e.pattern, period);
    return d * demand_multiplier * u.flow;
  };

  std::vector<int> chosen = opt.timesteps;
  if (chosen.empty()) {
    std::vector<double> total(horizon, 0.0);
    for (std::size_t p = 0; p < horizon; ++p)
      for (const auto& j : junctions) total[p] += node_demand(j, static_cast<int>(p));
    std::vector<int> order(horizon);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return total[a] > total[b]; });
    order.resize(std::min<std::size_t>(horizon, static_cast<std::size_t>(std::max(1, opt.peak_count))));
    std::sort(order.begin(), order.end());
    chosen = order;
  }
  for (int p : chosen) {
    if (p < 0) throw ValidationError("timestep index must be non-negative");
    Eigen::VectorXd d(net.n_n()), h0(net.n_0());
    for (int i = 0; i < net.n_n(); ++i) d[i] = node_demand(junctions[i], p);
    for (int k = 0; k < net.n_0(); ++k)
      h0[k] = reservoirs[k].head * u.length * (reservoirs[k].pattern.empty() ? 1.0 : multiplier(reservoirs[k].pattern, p));
    net.demands.push_back(d);
    net.source_heads.push_back(h0);
  }

  if (!pumps.empty()) {
    const auto lost = detail::unreachable_nodes(net);
    if (!lost.empty()) {
      std::set<std::string> lost_ids;
      for (int i : lost) lost_ids.insert(net.nodes[i].id);
      for (const auto& [pid, n1, n2] : pumps)
        if (lost_ids.count(n1) || lost_ids.count(n2))
          throw ValidationError("pump " + pid + " is required for connectivity but pumps are not supported");
    }
  }
  validate(net);
  return net;
}

inline NetworkModel parse_inp_string(const std::string& text, const InpOptions& opt = {},
                                     std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return parse_inp(in, opt, warnings);
}

// Writes SI (LPS) units with one demand pattern per junction holding the n_t
// snapshots, so parsing with timesteps 0..n_t-1 reproduces the model.
inline void write_inp(std::ostream& out, const NetworkModel& net) {
  out << std::setprecision(17);
  out << "[TITLE]\nsnapshot network\n\n[JUNCTIONS]\n";
  for (const auto& n : net.nodes) out << n.id << '\t' << n.elevation << "\n";
  out << "\n[RESERVOIRS]\n";
  const double h_ref = 1.0;
  for (int k = 0; k < net.n_0(); ++k) out << net.sources[k].id << '\t' << h_ref << "\tH_" << net.sources[k].id << "\n";
  out << "\n[PIPES]\n";
  for (const auto& l : net.links)
    if (l.kind == LinkKind::Pipe)
      out << l.id << '\t' << net.node_id(l.from) << '\t' << net.node_id(l.to) << '\t' << l.length << '\t'
          << l.diameter * 1000.0 << '\t' << l.hw_coefficient << "\t0\tOpen\n";
  out << "\n[VALVES]\n";
  for (const auto& l : net.links)
    if (l.kind == LinkKind::Valve) {
      out << l.id << '\t' << net.node_id(l.from) << '\t' << net.node_id(l.to) << '\t' << l.diameter * 1000.0;
      if (l.is_existing_prv) out << "\tPRV\t0\t" << l.valve_loss << "\n";
      else out << "\tTCV\t" << l.valve_loss << "\t0\n";
    }
  out << "\n[TAGS]\n";
  for (const auto& l : net.links)
    if (l.is_existing_dbv) out << "LINK\t" << l.id << "\tDBV\n";
  out << "\n[DEMANDS]\n";
  for (int i = 0; i < net.n_n(); ++i) out << net.nodes[i].id << "\t1\tD_" << net.nodes[i].id << "\n";
  out << "\n[PATTERNS]\n";
  for (int i = 0; i < net.n_n(); ++i) {
    out << "D_" << net.nodes[i].id;
    for (int t = 0; t < net.n_t(); ++t) out << '\t' << net.demands[t][i] * 1000.0;
    out << "\n";
  }
  for (int k = 0; k < net.n_0(); ++k) {
    out << "H_" << net.sources[k].id;
    for (int t = 0; t < net.n_t(); ++t) out << '\t' << net.source_heads[t][k] / h_ref;
    out << "\n";
  }
  out << "\n[COORDINATES]\n";
  for (const auto& n : net.nodes)
    if (n.coordinates) out << n.id << '\t' << n.coordinates->first << '\t' << n.coordinates->second << "\n";
  for (const auto& s : net.sources)
    if (s.coordinates) out << s.id << '\t' << s.coordinates->first << '\t' << s.coordinates->second << "\n";
  out << "\n[OPTIONS]\nUnits\tLPS\nHeadloss\tH-W\n\n[END]\n";
}

inline std::string write_inp_string(const NetworkModel& net) {
  std::ostringstream s;
  write_inp(s, net);
  return s.str();
}

}  // namespace cms
