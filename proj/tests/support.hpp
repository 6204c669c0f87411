// Test-only oracles and builders. Nothing here calls into the routing or
// transport code it is used to check.
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "btrange/scenario.hpp"
#include "btrange/topology.hpp"

namespace testsupport {

using btrange::Adjacency;
using btrange::NodeId;

/// Hop distances from `src` by breadth-first search.
inline std::map<NodeId, int> bfs(const Adjacency& g, NodeId src) {
  std::map<NodeId, int> dist{{src, 0}};
  std::deque<NodeId> q{src};
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop_front();
    auto it = g.find(u);
    if (it == g.end()) continue;
    for (NodeId v : it->second) {
      if (dist.emplace(v, dist[u] + 1).second) q.push_back(v);
    }
  }
  return dist;
}

inline int diameter(const Adjacency& g) {
  int d = 0;
  for (const auto& [n, _] : g) {
    for (const auto& [m, h] : bfs(g, n)) d = std::max(d, h);
  }
  return d;
}

/// Unit-disk graph over n points uniformly placed in a side x side square.
struct GeometricGraph {
  std::vector<std::pair<double, double>> points;
  Adjacency graph;
};

inline GeometricGraph random_geometric_graph(std::uint64_t seed, int n, double side, double radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, side);
  GeometricGraph g;
  for (int i = 0; i < n; ++i) g.points.emplace_back(u(rng), u(rng));
  for (int i = 0; i < n; ++i) g.graph[NodeId(static_cast<std::uint16_t>(i))];
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double dx = g.points[i].first - g.points[j].first;
      double dy = g.points[i].second - g.points[j].second;
      if (dx * dx + dy * dy <= radius * radius) {
        g.graph[NodeId(static_cast<std::uint16_t>(i))].insert(NodeId(static_cast<std::uint16_t>(j)));
        g.graph[NodeId(static_cast<std::uint16_t>(j))].insert(NodeId(static_cast<std::uint16_t>(i)));
      }
    }
  }
  return g;
}

inline btrange::NodeSpec class3_at(std::uint16_t id, double x, double y) {
  btrange::NodeSpec s;
  s.id = NodeId(id);
  s.position = {x, y};
  s.device_class = btrange::DeviceClass::Class3;
  return s;
}

/// Collinear Class3 nodes 0..n-1 with the given spacing in meters.
inline btrange::ScenarioConfig line_config(int n, double spacing) {
  btrange::ScenarioConfig c;
  for (int i = 0; i < n; ++i) c.nodes.push_back(class3_at(static_cast<std::uint16_t>(i), i * spacing, 0.0));
  return c;
}

inline std::string scenario_path(const std::string& name) {
  return std::string(BTRANGE_SCENARIO_DIR) + "/" + name;
}

inline btrange::ScenarioConfig load(const std::string& name) {
  auto r = btrange::parse_scenario(scenario_path(name));
  if (!r.ok()) throw std::runtime_error("cannot load " + name + ": " + r.diagnostics.front().str());
  return *r.config;
}

}  // namespace testsupport
