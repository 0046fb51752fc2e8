#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cms/common.hpp"

namespace cms {

enum class LinkKind { Pipe, Valve };

// Nodes live in two index spaces: demand (junction) nodes [0, n_n) and
// known-head source nodes [0, n_0).
struct NodeRef {
  bool source = false;
  int index = -1;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

inline double circle_area(double diameter) { return std::numbers::pi * diameter * diameter / 4.0; }

struct Link {
  std::string id;
  NodeRef from;
  NodeRef to;
  LinkKind kind = LinkKind::Pipe;
  double length = 0.0;          // m
  double diameter = 0.0;        // m
  double hw_coefficient = 0.0;  // pipes only
  double valve_loss = 0.0;      // K, valves only
  double area = 0.0;            // m^2, pi D^2 / 4
  bool is_existing_prv = false;
  bool is_existing_dbv = false;
  friend bool operator==(const Link&, const Link&) = default;
};

struct DemandNode {
  std::string id;
  double elevation = 0.0;
  std::optional<std::pair<double, double>> coordinates;
  friend bool operator==(const DemandNode&, const DemandNode&) = default;
};

struct SourceNode {
  std::string id;
  std::optional<std::pair<double, double>> coordinates;
  friend bool operator==(const SourceNode&, const SourceNode&) = default;
};

inline Link make_pipe(std::string id, NodeRef from, NodeRef to, double length, double diameter, double c) {
  Link l;
  l.id = std::move(id);
  l.from = from;
  l.to = to;
  l.kind = LinkKind::Pipe;
  l.length = length;
  l.diameter = diameter;
  l.hw_coefficient = c;
  l.area = circle_area(diameter);
  return l;
}

inline Link make_valve(std::string id, NodeRef from, NodeRef to, double diameter, double k, bool prv = false) {
  Link l;
  l.id = std::move(id);
  l.from = from;
  l.to = to;
  l.kind = LinkKind::Valve;
  l.diameter = diameter;
  l.valve_loss = k;
  l.area = circle_area(diameter);
  l.is_existing_prv = prv;
  return l;
}

// Steady-state network over n_t independent timestep snapshots. Positive
// flow runs from `from` to `to`. Immutable once validated.
struct NetworkModel {
  std::vector<Link> links;
  std::vector<DemandNode> nodes;
  std::vector<SourceNode> sources;
  std::vector<Eigen::VectorXd> demands;       // per t, n_n, m^3/s
  std::vector<Eigen::VectorXd> source_heads;  // per t, n_0, m

  int n_p() const { return static_cast<int>(links.size()); }
  int n_n() const { return static_cast<int>(nodes.size()); }
  int n_0() const { return static_cast<int>(sources.size()); }
  int n_t() const { return static_cast<int>(demands.size()); }

  Eigen::VectorXd elevations() const {
    Eigen::VectorXd e(n_n());
    for (int i = 0; i < n_n(); ++i) e[i] = nodes[i].elevation;
    return e;
  }

  Eigen::VectorXd areas() const {
    Eigen::VectorXd a(n_p());
    for (int j = 0; j < n_p(); ++j) a[j] = links[j].area;
    return a;
  }

  // -1 at the from-node, +1 at the to-node, so that
  // A12 h + A10 h0 = h_to - h_from and A12^T q is the net inflow per node.
  Eigen::SparseMatrix<double> A12() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int j = 0; j < n_p(); ++j) {
      if (!links[j].from.source) t.emplace_back(j, links[j].from.index, -1.0);
      if (!links[j].to.source) t.emplace_back(j, links[j].to.index, 1.0);
    }
    Eigen::SparseMatrix<double> m(n_p(), n_n());
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  Eigen::SparseMatrix<double> A10() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int j = 0; j < n_p(); ++j) {
      if (links[j].from.source) t.emplace_back(j, links[j].from.index, -1.0);
      if (links[j].to.source) t.emplace_back(j, links[j].to.index, 1.0);
    }
    Eigen::SparseMatrix<double> m(n_p(), n_0());
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  int link_index(const std::string& id) const {
    for (int j = 0; j < n_p(); ++j)
      if (links[j].id == id) return j;
    return -1;
  }

  std::optional<NodeRef> node_ref(const std::string& id) const {
    for (int i = 0; i < n_n(); ++i)
      if (nodes[i].id == id) return NodeRef{false, i};
    for (int k = 0; k < n_0(); ++k)
      if (sources[k].id == id) return NodeRef{true, k};
    return std::nullopt;
  }

  const std::string& node_id(NodeRef r) const { return r.source ? sources[r.index].id : nodes[r.index].id; }

  double max_source_head() const {
    double m = -kInf;
    for (const auto& h : source_heads)
      if (h.size() > 0) m = std::max(m, h.maxCoeff());
    return m;
  }

  friend bool operator==(const NetworkModel& a, const NetworkModel& b) {
    auto same = [](const std::vector<Eigen::VectorXd>& x, const std::vector<Eigen::VectorXd>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i].size() != y[i].size() || x[i] != y[i]) return false;
      return true;
    };
    return a.links == b.links && a.nodes == b.nodes && a.sources == b.sources && same(a.demands, b.demands) &&
           same(a.source_heads, b.source_heads);
  }
};

namespace detail {

// Undirected adjacency over a unified node numbering: demand nodes first,
// then sources at offset n_n.
inline int flat(const NetworkModel& net, NodeRef r) { return r.source ? net.n_n() + r.index : r.index; }

inline std::vector<std::vector<std::pair<int, int>>> adjacency(const NetworkModel& net,
                                                               const std::vector<char>* removed = nullptr) {
  std::vector<std::vector<std::pair<int, int>>> adj(net.n_n() + net.n_0());
  for (int j = 0; j < net.n_p(); ++j) {
    if (removed && (*removed)[j]) continue;
    const int a = flat(net, net.links[j].from), b = flat(net, net.links[j].to);
    adj[a].emplace_back(b, j);
    adj[b].emplace_back(a, j);
  }
  return adj;
}

// Demand nodes not reachable from any source once `removed` links are dropped.
inline std::vector<int> unreachable_nodes(const NetworkModel& net, const std::vector<char>* removed = nullptr) {
  const auto adj = adjacency(net, removed);
  std::vector<char> seen(adj.size(), 0);
  std::deque<int> queue;
  for (int k = 0; k < net.n_0(); ++k) {
    seen[net.n_n() + k] = 1;
    queue.push_back(net.n_n() + k);
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (const auto& [v, j] : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        queue.push_back(v);
      }
  }
  std::vector<int> out;
  for (int i = 0; i < net.n_n(); ++i)
    if (!seen[i]) out.push_back(i);
  return out;
}

}  // namespace detail

inline void validate(const NetworkModel& net) {
  auto fail = [](const std::string& m) { throw ValidationError(m); };
  if (net.n_0() < 1) fail("network has no source node");
  if (net.n_t() < 1) fail("network has no timesteps");
  if (static_cast<int>(net.source_heads.size()) != net.n_t()) fail("source head snapshots do not match n_t");
  for (int t = 0; t < net.n_t(); ++t) {
    if (net.demands[t].size() != net.n_n()) fail("demand vector size mismatch at timestep " + std::to_string(t));
    if (net.source_heads[t].size() != net.n_0()) fail("source head size mismatch at timestep " + std::to_string(t));
    for (int i = 0; i < net.n_n(); ++i)
      if (!std::isfinite(net.demands[t][i]) || net.demands[t][i] < 0.0)
        fail("demand at node " + net.nodes[i].id + " must be finite and >= 0");
    if (!net.source_heads[t].allFinite()) fail("source heads must be finite");
  }
  auto check_ref = [&](const Link& l, NodeRef r) {
    const int bound = r.source ? net.n_0() : net.n_n();
    if (r.index < 0 || r.index >= bound) fail("link " + l.id + " references a missing node");
  };
  for (const auto& l : net.links) {
    check_ref(l, l.from);
    check_ref(l, l.to);
    if (l.from == l.to) fail("link " + l.id + " joins a node to itself");
    if (l.from.source && l.to.source) fail("link " + l.id + " joins two sources");
    if (!(l.diameter > 0.0)) fail("link " + l.id + " needs a positive diameter");
    if (std::abs(l.area - circle_area(l.diameter)) > 1e-12 * circle_area(l.diameter))
      fail("link " + l.id + " area inconsistent with diameter");
    if (l.kind == LinkKind::Pipe) {
      if (!(l.length > 0.0) || !(l.hw_coefficient > 0.0)) fail("pipe " + l.id + " needs positive length and C");
      if (l.is_existing_prv) fail("pipe " + l.id + " cannot be a PRV");
    } else if (!(l.valve_loss >= 0.0)) {
      fail("valve " + l.id + " needs a non-negative loss coefficient");
    }
    if (l.is_existing_prv && l.is_existing_dbv) fail("link " + l.id + " is both PRV and DBV");
  }
  const auto lost = detail::unreachable_nodes(net);
  if (!lost.empty()) fail("network is disconnected: node " + net.nodes[lost.front()].id + " has no path to a source");
}

struct ForestCoreDecomposition {
  std::vector<int> core_links;
  std::vector<int> forest_links;
  // Per forest link (parallel to forest_links): +1 if the pruned subtree
  // sits at the to-node, -1 if at the from-node, and the demand nodes it feeds.
  std::vector<int> forest_sign;
  std::vector<std::vector<int>> forest_downstream;

  bool is_core(int j) const { return std::binary_search(core_links.begin(), core_links.end(), j); }

  // Flow on each forest link implied by mass balance at timestep t.
  std::vector<double> forest_flows(const Eigen::VectorXd& demand, const Eigen::VectorXd* alpha = nullptr) const {
    std::vector<double> out(forest_links.size());
    for (std::size_t f = 0; f < forest_links.size(); ++f) {
      double s = 0.0;
      for (int i : forest_downstream[f]) s += demand[i] + (alpha ? (*alpha)[i] : 0.0);
      out[f] = forest_sign[f] * s;
    }
    return out;
  }
};

// Repeatedly prunes degree-1 demand nodes; the pruned links form the forest.
inline ForestCoreDecomposition forest_core(const NetworkModel& net) {
  const int nn = net.n_n();
  const auto adj = detail::adjacency(net);
  std::vector<int> degree(adj.size());
  for (std::size_t u = 0; u < adj.size(); ++u) degree[u] = static_cast<int>(adj[u].size());
  std::vector<char> link_pruned(net.n_p(), 0), node_pruned(adj.size(), 0);
  std::vector<std::vector<int>> subtree(nn);
  for (int i = 0; i < nn; ++i) subtree[i] = {i};

  ForestCoreDecomposition d;
  std::deque<int> queue;
  for (int i = 0; i < nn; ++i)
    if (degree[i] == 1) queue.push_back(i);
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (node_pruned[u] || degree[u] != 1) continue;
    for (const auto& [v, j] : adj[u]) {
      if (link_pruned[j]) continue;
      link_pruned[j] = 1;
      node_pruned[u] = 1;
      --degree[u];
      --degree[v];
      const auto& l = net.links[j];
      d.forest_links.push_back(j);
      d.forest_sign.push_back((!l.to.source && l.to.index == u) ? 1 : -1);
      auto down = subtree[u];
      std::sort(down.begin(), down.end());
      d.forest_downstream.push_back(std::move(down));
      if (v < nn) {
        subtree[v].insert(subtree[v].end(), subtree[u].begin(), subtree[u].end());
        if (degree[v] == 1) queue.push_back(v);
      }
      break;
    }
  }
  // Sort forest entries by link index for stable output.
  std::vector<std::size_t> order(d.forest_links.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.forest_links[a] < d.forest_links[b]; });
  ForestCoreDecomposition sorted;
  for (auto k : order) {
    sorted.forest_links.push_back(d.forest_links[k]);
    sorted.forest_sign.push_back(d.forest_sign[k]);
    sorted.forest_downstream.push_back(std::move(d.forest_downstream[k]));
  }
  for (int j = 0; j < net.n_p(); ++j)
    if (!link_pruned[j]) sorted.core_links.push_back(j);
  return sorted;
}

struct ProblemStats {
  long long continuous = 0;
  long long binary = 0;
  long long nonconvex = 0;
  friend bool operator==(const ProblemStats&, const ProblemStats&) = default;
};

inline ProblemStats problem_stats(long long n_p, long long n_n, long long n_t) {
  return {n_t * (3 * n_p + 2 * n_n), 2 * n_t * n_p + n_p + n_n, 2 * n_t * n_p};
}

inline ProblemStats problem_stats(const NetworkModel& net, int n_t) { return problem_stats(net.n_p(), net.n_n(), n_t); }

// ---------------------------------------------------------------- JSON

inline nlohmann::json node_ref_json(NodeRef r) { return {{"source", r.source}, {"index", r.index}}; }

inline NodeRef node_ref_from_json(const nlohmann::json& j) { return {j.at("source").get<bool>(), j.at("index").get<int>()}; }

inline nlohmann::json to_json(const NetworkModel& net) {
  using nlohmann::json;
  json links = json::array();
  for (const auto& l : net.links) {
    links.push_back({{"id", l.id},
                     {"from", node_ref_json(l.from)},
                     {"to", node_ref_json(l.to)},
                     {"kind", l.kind == LinkKind::Pipe ? "pipe" : "valve"},
                     {"length", l.length},
                     {"diameter", l.diameter},
                     {"hw_coefficient", l.hw_coefficient},
                     {"valve_loss", l.valve_loss},
                     {"area", l.area},
                     {"existing_prv", l.is_existing_prv},
                     {"existing_dbv", l.is_existing_dbv}});
  }
  auto coords = [](const auto& c) -> json {
    if (!c) return nullptr;
    return json::array({c->first, c->second});
  };
  json nodes = json::array();
  for (const auto& n : net.nodes) nodes.push_back({{"id", n.id}, {"elevation", n.elevation}, {"coordinates", coords(n.coordinates)}});
  json sources = json::array();
  for (const auto& s : net.sources) sources.push_back({{"id", s.id}, {"coordinates", coords(s.coordinates)}});
  auto vecs = [](const std::vector<Eigen::VectorXd>& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    return out;
  };
  return {{"links", links},
          {"nodes", nodes},
          {"sources", sources},
          {"demands", vecs(net.demands)},
          {"source_heads", vecs(net.source_heads)}};
}

inline NetworkModel network_from_json(const nlohmann::json& j) {
  NetworkModel net;
  auto coords = [](const nlohmann::json& c) -> std::optional<std::pair<double, double>> {
    if (c.is_null()) return std::nullopt;
    return std::make_pair(c.at(0).get<double>(), c.at(1).get<double>());
  };
  for (const auto& l : j.at("links")) {
    Link x;
    x.id = l.at("id").get<std::string>();
    x.from = node_ref_from_json(l.at("from"));
    x.to = node_ref_from_json(l.at("to"));
    x.kind = l.at("kind").get<std::string>() == "pipe" ? LinkKind::Pipe : LinkKind::Valve;
    x.length = l.at("length").get<double>();
    x.diameter = l.at("diameter").get<double>();
    x.hw_coefficient = l.at("hw_coefficient").get<double>();
    x.valve_loss = l.at("valve_loss").get<double>();
    x.area = l.at("area").get<double>();
    x.is_existing_prv = l.at("existing_prv").get<bool>();
    x.is_existing_dbv = l.at("existing_dbv").get<bool>();
    net.links.push_back(std::move(x));
  }
  for (const auto& n : j.at("nodes"))
    net.nodes.push_back({n.at("id").get<std::string>(), n.at("elevation").get<double>(), coords(n.at("coordinates"))});
  for (const auto& s : j.at("sources")) net.sources.push_back({s.at("id").get<std::string>(), coords(s.at("coordinates"))});
  auto vecs = [](const nlohmann::json& arr) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& v : arr) {
      const auto x = v.get<std::vector<double>>();
      out.push_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    }
    return out;
  };
  net.demands = vecs(j.at("demands"));
  net.source_heads = vecs(j.at("source_heads"));
  validate(net);
  return net;
}

}  // namespace cms
