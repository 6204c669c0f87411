// Node placement, radio classes, lifecycle state, waypoint motion and the
// in-range adjacency from which every link is derived.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "btrange/core.hpp"

namespace btrange {

struct Position {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class DeviceClass { Class1 = 1, Class2 = 2, Class3 = 3 };

/// Output-power class of a radio together with its effective range.
struct RadioClass {
  DeviceClass id = DeviceClass::Class3;
  double tx_power_mw = 1.0;
  double range_m = 10.0;

  /// Default power and range per class (the top of each class's range band).
  static RadioClass defaults(DeviceClass c) {
    switch (c) {
      case DeviceClass::Class1: return {c, 100.0, 100.0};
      case DeviceClass::Class2: return {c, 2.5, 30.0};
      case DeviceClass::Class3: return {c, 1.0, 10.0};
    }
    throw Error("unknown device class");
  }

  /// Accepted range band [lo, hi] in meters for a class.
  static std::pair<double, double> range_band(DeviceClass c) {
    switch (c) {
      case DeviceClass::Class1: return {40.0, 100.0};
      case DeviceClass::Class2: return {15.0, 30.0};
      case DeviceClass::Class3: return {5.0, 10.0};
    }
    throw Error("unknown device class");
  }

  /// Class defaults with the range overridden. Throws Error outside the band.
  static RadioClass with_range(DeviceClass c, double range_m) {
    auto [lo, hi] = range_band(c);
    if (!(range_m >= lo && range_m <= hi)) {
      throw Error("range " + std::to_string(range_m) + " m outside class band");
    }
    RadioClass r = defaults(c);
    r.range_m = range_m;
    return r;
  }

  friend bool operator==(const RadioClass&, const RadioClass&) = default;
};

enum class NodeState { Active, Idle, Parked, Sniffing, Off };

inline std::string_view to_string(NodeState s) {
  switch (s) {
    case NodeState::Active: return "active";
    case NodeState::Idle: return "idle";
    case NodeState::Parked: return "parked";
    case NodeState::Sniffing: return "sniffing";
    case NodeState::Off: return "off";
  }
  return "?";
}

inline std::optional<NodeState> parse_node_state(std::string_view s) {
  for (auto st : {NodeState::Active, NodeState::Idle, NodeState::Parked, NodeState::Sniffing, NodeState::Off}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

struct Waypoint {
  SimTime time;
  Position position;
};

struct Node {
  NodeId id;
  Position position;
  RadioClass radio;
  NodeState state = NodeState::Active;
  /// Strictly increasing in time; empty for a stationary node.
  std::vector<Waypoint> waypoints;
};

inline bool waypoints_valid(const std::vector<Waypoint>& wps) {
  for (std::size_t i = 1; i < wps.size(); ++i) {
    if (!(wps[i - 1].time < wps[i].time)) return false;
  }
  return true;
}

/// The set of simulated devices, kept sorted by id.
class World {
 public:
  World() = default;
  explicit World(std::vector<Node> nodes) {
    for (auto& n : nodes) add(std::move(n));
  }

  void add(Node n) {
    if (n.id.value > kMaxNodeIdValue) throw CapacityError("node id " + to_string(n.id) + " exceeds 254");
    if (nodes_.size() >= kMaxNodes) throw CapacityError("scenario exceeds 255 nodes");
    if (!waypoints_valid(n.waypoints)) throw Error("waypoints of node " + to_string(n.id) + " not increasing");
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), n.id, [](const Node& a, NodeId id) { return a.id < id; });
    if (it != nodes_.end() && it->id == n.id) throw Error("duplicate node id " + to_string(n.id));
    nodes_.insert(it, std::move(n));
  }

  bool contains(NodeId id) const { return find(id) != nullptr; }

  const Node& node(NodeId id) const {
    if (auto* n = find(id)) return *n;
    throw LookupError("unknown node " + to_string(id));
  }
  Node& node(NodeId id) { return const_cast<Node&>(std::as_const(*this).node(id)); }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

 private:
  const Node* find(NodeId id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id, [](const Node& a, NodeId v) { return a.id < v; });
    return (it != nodes_.end() && it->id == id) ? &*it : nullptr;
  }

  std::vector<Node> nodes_;
};

/// Mutual radio coverage, ignoring lifecycle state except Off. This is the
/// graph piconets are formed over: a parked device is still a member.
inline bool within_mutual_range(const Node& a, const Node& b) {
  if (a.id == b.id) return false;
  if (a.state == NodeState::Off || b.state == NodeState::Off) return false;
  double d = distance(a.position, b.position);
  return d <= a.radio.range_m && d <= b.radio.range_m;
}

/// True iff each node lies within the other's range and both are Active.
inline bool in_range(const Node& a, const Node& b) {
  return a.state == NodeState::Active && b.state == NodeState::Active && within_mutual_range(a, b);
}

inline NodeSet neighbor_set(NodeId n, const World& world) {
  const Node& self = world.node(n);
  NodeSet out;
  for (const Node& other : world.nodes()) {
    if (other.id != n && in_range(self, other)) out.insert(other.id);
  }
  return out;
}

using Adjacency = std::map<NodeId, NodeSet>;

/// Adjacency over every node in the world using `edge` as the link predicate.
template <typename EdgePredicate>
Adjacency adjacency(const World& world, EdgePredicate edge) {
  Adjacency adj;
  const auto& ns = world.nodes();
  for (const Node& n : ns) adj[n.id];
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (std::size_t j = i + 1; j < ns.size(); ++j) {
      if (edge(ns[i], ns[j])) {
        adj[ns[i].id].insert(ns[j].id);
        adj[ns[j].id].insert(ns[i].id);
      }
    }
  }
  return adj;
}

inline Adjacency in_range_graph(const World& world) {
  return adjacency(world, [](const Node& a, const Node& b) { return in_range(a, b); });
}

/// Position of a node at time t: piecewise-linear between waypoints, clamped
/// to the first and last waypoint outside their span.
inline Position position_at(const Node& n, SimTime t) {
  const auto& wps = n.waypoints;
  if (wps.empty()) return n.position;
  if (t <= wps.front().time) return wps.front().position;
  if (t >= wps.back().time) return wps.back().position;
  auto hi = std::upper_bound(wps.begin(), wps.end(), t, [](SimTime v, const Waypoint& w) { return v < w.time; });
  auto lo = hi - 1;
  double span = static_cast<double>((hi->time - lo->time).half_us());
  double f = static_cast<double>((t - lo->time).half_us()) / span;
  return {lo->position.x + f * (hi->position.x - lo->position.x),
          lo->position.y + f * (hi->position.y - lo->position.y)};
}

inline void apply_motion(World& world, SimTime t) {
  if (t < SimTime{}) throw Error("negative motion time");
  for (Node& n : world.nodes()) {
    if (!n.waypoints.empty()) n.position = position_at(n, t);
  }
}

struct StateChange {
  NodeId node;
  NodeState from;
  NodeState to;
  SimTime at;
};

/// Sets a node's lifecycle state. Going Off drops all links silently; no
/// withdraw is implied.
inline StateChange set_node_state(World& world, NodeId id, NodeState s, SimTime t) {
  Node& n = world.node(id);
  StateChange ch{id, n.state, s, t};
  n.state = s;
  return ch;
}

}  // namespace btrange
