#pragma once

// Small synthetic networks shared by the unit and acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "cms/netmodel.hpp"

namespace fixtures {

using cms::NetworkModel;
using cms::NodeRef;

inline NodeRef J(int i) { return {false, i}; }
inline NodeRef R(int k) { return {true, k}; }

inline void set_snapshots(NetworkModel& net, const std::vector<std::vector<double>>& demand,
                          const std::vector<std::vector<double>>& heads) {
  net.demands.clear();
  net.source_heads.clear();
  for (const auto& d : demand) net.demands.push_back(Eigen::Map<const Eigen::VectorXd>(d.data(), d.size()));
  for (const auto& h : heads) net.source_heads.push_back(Eigen::Map<const Eigen::VectorXd>(h.data(), h.size()));
}

inline void add_junctions(NetworkModel& net, int n, double elevation = 0.0) {
  for (int i = 0; i < n; ++i) net.nodes.push_back({"J" + std::to_string(i + 1), elevation, std::nullopt});
}

inline void add_sources(NetworkModel& net, int n) {
  for (int k = 0; k < n; ++k) net.sources.push_back({"R" + std::to_string(k + 1), std::nullopt});
}

// Reservoir -> one pipe -> one junction.
inline NetworkModel single_pipe(double demand = 0.005, double head = 50.0, double length = 1000.0,
                                double diameter = 0.3, double c = 130.0) {
  NetworkModel net;
  add_junctions(net, 1);
  add_sources(net, 1);
  net.links.push_back(cms::make_pipe("P1", R(0), J(0), length, diameter, c));
  set_snapshots(net, {{demand}}, {{head}});
  return net;
}

// Two identical pipes R -> J1, demand at J1.
inline NetworkModel parallel_pipes(double demand = 0.01) {
  NetworkModel net;
  add_junctions(net, 1);
  add_sources(net, 1);
  net.links.push_back(cms::make_pipe("P1", R(0), J(0), 500.0, 0.2, 120.0));
  net.links.push_back(cms::make_pipe("P2", R(0), J(0), 500.0, 0.2, 120.0));
  set_snapshots(net, {{demand}}, {{60.0}});
  return net;
}

// Source feeding a hub junction that feeds `leaves` leaf junctions.
inline NetworkModel star(int leaves = 3) {
  NetworkModel net;
  add_junctions(net, leaves + 1);
  add_sources(net, 1);
  net.links.push_back(cms::make_pipe("P0", R(0), J(0), 200.0, 0.2, 120.0));
  std::vector<double> d(leaves + 1, 0.002);
  d[0] = 0.0;
  for (int i = 0; i < leaves; ++i)
    net.links.push_back(cms::make_pipe("P" + std::to_string(i + 1), J(0), J(i + 1), 150.0, 0.1, 110.0));
  set_snapshots(net, {d}, {{45.0}});
  return net;
}

// Loop R-J1-J2 with a pendant J2 -> J3. Links: 0..2 loop, 3 pendant.
inline NetworkModel triangle_pendant() {
  NetworkModel net;
  add_junctions(net, 3);
  add_sources(net, 1);
  net.links.push_back(cms::make_pipe("L1", R(0), J(0), 300.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("L2", J(0), J(1), 300.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("L3", R(0), J(1), 300.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("T", J(1), J(2), 200.0, 0.1, 110.0));
  set_snapshots(net, {{0.004, 0.002, 0.003}}, {{55.0}});
  return net;
}

// Single loop of three pipes fed directly by the source, one demand node.
inline NetworkModel single_loop() {
  NetworkModel net;
  add_junctions(net, 2);
  add_sources(net, 1);
  net.links.push_back(cms::make_pipe("A", R(0), J(0), 400.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("B", J(0), J(1), 300.0, 0.1, 110.0));
  net.links.push_back(cms::make_pipe("C", R(0), J(1), 500.0, 0.12, 110.0));
  set_snapshots(net, {{0.002, 0.006}}, {{50.0}});
  return net;
}

// size x size lattice; node (0,0) is the reservoir, the rest are junctions
// with uniform demand. Horizontal links first, then vertical.
inline NetworkModel grid(int size = 5, double demand = 0.001, double head = 50.0, double diameter = 0.15,
                         int n_t = 1) {
  NetworkModel net;
  add_sources(net, 1);
  auto ref = [&](int r, int c) { return (r == 0 && c == 0) ? R(0) : J(r * size + c - 1); };
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (r || c) net.nodes.push_back({"N" + std::to_string(r) + "_" + std::to_string(c), 0.0, std::make_pair(c * 100.0, r * 100.0)});
  net.sources[0].coordinates = std::make_pair(0.0, 0.0);
  int id = 0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c + 1 < size; ++c)
      net.links.push_back(cms::make_pipe("H" + std::to_string(++id), ref(r, c), ref(r, c + 1), 100.0, diameter, 100.0));
  for (int r = 0; r + 1 < size; ++r)
    for (int c = 0; c < size; ++c)
      net.links.push_back(cms::make_pipe("V" + std::to_string(++id), ref(r, c), ref(r + 1, c), 100.0, diameter, 100.0));
  std::vector<std::vector<double>> d, h;
  for (int t = 0; t < n_t; ++t) {
    d.emplace_back(net.nodes.size(), demand * (1.0 + 0.25 * t));
    h.push_back({head});
  }
  set_snapshots(net, d, h);
  return net;
}

// Reservoir -> PRV -> J1 -> pipe -> J2 with elevated J2.
inline NetworkModel prv_line(double head = 60.0) {
  NetworkModel net;
  net.nodes.push_back({"J1", 0.0, std::nullopt});
  net.nodes.push_back({"J2", 10.0, std::nullopt});
  add_sources(net, 1);
  net.links.push_back(cms::make_valve("V1", R(0), J(0), 0.2, 0.0, true));
  net.links.push_back(cms::make_pipe("P1", J(0), J(1), 800.0, 0.2, 120.0));
  set_snapshots(net, {{0.001, 0.004}}, {{head}});
  return net;
}

// Two sources and two loops; existing PRVs on both source outlets.
inline NetworkModel two_loop() {
  NetworkModel net;
  add_junctions(net, 5);
  add_sources(net, 2);
  net.links.push_back(cms::make_valve("V1", R(0), J(0), 0.2, 0.0, true));
  net.links.push_back(cms::make_valve("V2", R(1), J(4), 0.2, 0.0, true));
  net.links.push_back(cms::make_pipe("P1", J(0), J(1), 400.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("P2", J(1), J(2), 400.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("P3", J(2), J(3), 400.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("P4", J(3), J(4), 400.0, 0.15, 110.0));
  net.links.push_back(cms::make_pipe("P5", J(0), J(3), 600.0, 0.1, 110.0));
  net.links.push_back(cms::make_pipe("P6", J(1), J(4), 600.0, 0.1, 110.0));
  set_snapshots(net, {{0.002, 0.003, 0.004, 0.003, 0.002}, {0.003, 0.005, 0.006, 0.004, 0.003}},
                {{55.0, 54.0}, {55.0, 54.0}});
  return net;
}

// Random connected network: spanning tree plus extra chords, 1-2 sources.
inline NetworkModel random_network(std::uint64_t seed, int max_nodes = 60, int n_t = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int total = 4 + static_cast<int>(u01(rng) * (max_nodes - 4));
  const int n0 = u01(rng) < 0.5 ? 1 : 2;
  const int nn = total - n0;
  NetworkModel net;
  for (int i = 0; i < nn; ++i) net.nodes.push_back({"J" + std::to_string(i + 1), 5.0 * u01(rng), std::nullopt});
  add_sources(net, n0);
  auto ref = [&](int v) { return v < n0 ? R(v) : J(v - n0); };
  int id = 0;
  auto add = [&](int a, int b) {
    net.links.push_back(cms::make_pipe("P" + std::to_string(++id), ref(a), ref(b), 50.0 + 450.0 * u01(rng),
                                       0.1 + 0.2 * u01(rng), 90.0 + 50.0 * u01(rng)));
  };
  // Junction v hangs off an earlier vertex; the first junction off source 0.
  for (int v = n0; v < total; ++v) add(v == n0 ? 0 : static_cast<int>(u01(rng) * v), v);
  for (int k = 1; k < n0; ++k) add(k, n0 + static_cast<int>(u01(rng) * nn));
  const int chords = static_cast<int>(total * 0.3);
  for (int c = 0; c < chords; ++c) {
    const int a = n0 + static_cast<int>(u01(rng) * nn), b = n0 + static_cast<int>(u01(rng) * nn);
    if (a != b) add(a, b);
  }
  std::vector<std::vector<double>> d, h;
  for (int t = 0; t < n_t; ++t) {
    std::vector<double> dt(nn);
    for (auto& x : dt) x = u01(rng) < 0.8 ? 0.004 * u01(rng) : 0.0;
    d.push_back(dt);
    std::vector<double> ht(n0);
    for (auto& x : ht) x = 50.0 + 10.0 * u01(rng);
    h.push_back(ht);
  }
  set_snapshots(net, d, h);
  return net;
}

}  // namespace fixtures
