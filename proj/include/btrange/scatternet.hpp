// Piconet formation over the in-range graph: master / slave / bridge roles
// and the link rule that restricts traffic to master-slave pairs.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "btrange/topology.hpp"

namespace btrange {

struct PiconetId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(PiconetId, PiconetId) = default;
};

enum class RoleKind { Master, ActiveSlave, ParkedSlave };

inline std::string_view to_string(RoleKind r) {
  switch (r) {
    case RoleKind::Master: return "master";
    case RoleKind::ActiveSlave: return "active_slave";
    case RoleKind::ParkedSlave: return "parked_slave";
  }
  return "?";
}

struct Role {
  RoleKind kind;
  PiconetId piconet;
  friend bool operator==(const Role&, const Role&) = default;
};

inline constexpr std::size_t kMaxActiveSlaves = 7;

struct Piconet {
  PiconetId id;
  NodeId master;
  std::vector<NodeId> active_slaves;
  std::vector<NodeId> parked_slaves;
};

class Scatternet {
 public:
  const std::vector<Piconet>& piconets() const { return piconets_; }
  const std::map<NodeId, std::vector<Role>>& memberships() const { return memberships_; }

  const std::vector<Role>& roles(NodeId n) const {
    static const std::vector<Role> none;
    auto it = memberships_.find(n);
    return it == memberships_.end() ? none : it->second;
  }

  bool has_role(NodeId n) const { return !roles(n).empty(); }

  /// Nodes holding membership in two or more piconets.
  NodeSet bridge_nodes() const {
    NodeSet out;
    for (const auto& [n, rs] : memberships_) {
      if (rs.size() >= 2) out.insert(n);
    }
    return out;
  }

  const Piconet& piconet(PiconetId id) const { return piconets_.at(id.value); }

  /// The piconet in which one of (a, b) is Master and the other an
  /// ActiveSlave, if any. Also reports whether `a` is the master.
  struct SharedLink {
    PiconetId piconet;
    bool a_is_master;
  };
  std::optional<SharedLink> master_slave_link(NodeId a, NodeId b) const {
    for (const Role& ra : roles(a)) {
      for (const Role& rb : roles(b)) {
        if (ra.piconet != rb.piconet) continue;
        if (ra.kind == RoleKind::Master && rb.kind == RoleKind::ActiveSlave) return SharedLink{ra.piconet, true};
        if (rb.kind == RoleKind::Master && ra.kind == RoleKind::ActiveSlave) return SharedLink{ra.piconet, false};
      }
    }
    return std::nullopt;
  }

  PiconetId add_piconet(NodeId master) {
    PiconetId id{static_cast<std::uint32_t>(piconets_.size())};
    piconets_.push_back(Piconet{id, master, {}, {}});
    memberships_[master].push_back(Role{RoleKind::Master, id});
    return id;
  }

  void add_member(PiconetId id, NodeId n, RoleKind kind) {
    Piconet& p = piconets_.at(id.value);
    if (kind == RoleKind::ActiveSlave) p.active_slaves.push_back(n);
    else p.parked_slaves.push_back(n);
    memberships_[n].push_back(Role{kind, id});
  }

  /// Lists every violated structural invariant; empty when well formed.
  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    std::map<NodeId, int> master_roles;
    for (const Piconet& p : piconets_) {
      ++master_roles[p.master];
      if (p.active_slaves.size() > kMaxActiveSlaves) {
        out.push_back("piconet " + std::to_string(p.id.value) + " has " + std::to_string(p.active_slaves.size()) +
                      " active slaves");
      }
      int masters = 0;
      for (const auto& [n, rs] : memberships_) {
        for (const Role& r : rs) {
          if (r.piconet == p.id && r.kind == RoleKind::Master) ++masters;
        }
      }
      if (masters != 1) out.push_back("piconet " + std::to_string(p.id.value) + " has " + std::to_string(masters) + " masters");
    }
    for (const auto& [n, count] : master_roles) {
      if (count > 1) out.push_back("node " + to_string(n) + " masters " + std::to_string(count) + " piconets");
    }
    for (const auto& [n, rs] : memberships_) {
      for (std::size_t i = 0; i < rs.size(); ++i) {
        for (std::size_t j = i + 1; j < rs.size(); ++j) {
          if (rs[i].piconet == rs[j].piconet) out.push_back("node " + to_string(n) + " holds two roles in one piconet");
        }
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    auto ids = [](const std::vector<NodeId>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (NodeId n : v) a.push_back(n.value);
      return a;
    };
    nlohmann::json pics = nlohmann::json::array();
    for (const Piconet& p : piconets_) {
      pics.push_back({{"id", p.id.value},
                      {"master", p.master.value},
                      {"active_slaves", ids(p.active_slaves)},
                      {"parked_slaves", ids(p.parked_slaves)}});
    }
    nlohmann::json bridges = nlohmann::json::array();
    for (NodeId n : bridge_nodes()) bridges.push_back(n.value);
    return {{"piconets", pics}, {"bridges", bridges}};
  }

 private:
  std::vector<Piconet> piconets_;
  std::map<NodeId, std::vector<Role>> memberships_;
};

/// Greedy degree-ordered formation. Nodes are visited by descending degree
/// (ties: lower id). An unassigned node becomes a master, takes up to seven
/// unassigned neighbors as active slaves and parks the rest; neighbors
/// already placed in another piconet join as active slaves (bridges) while
/// capacity remains.
///
/// The heuristic draws no randomness; `seed` is accepted so that formation
/// stays a function of (graph, seed) if a randomized variant is added.
inline Scatternet form_scatternet(const Adjacency& graph, std::uint64_t seed = 0) {
  (void)seed;
  if (graph.size() > kMaxNodes) throw CapacityError("scatternet formation over more than 255 nodes");

  std::vector<NodeId> order;
  order.reserve(graph.size());
  for (const auto& [n, _] : graph) order.push_back(n);
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    return graph.at(a).size() > graph.at(b).size();
  });

  Scatternet s;
  for (NodeId n : order) {
    if (s.has_role(n)) continue;
    PiconetId pid = s.add_piconet(n);
    std::size_t active = 0;
    std::vector<NodeId> assigned_neighbors;
    for (NodeId m : graph.at(n)) {
      if (s.has_role(m)) {
        assigned_neighbors.push_back(m);
        continue;
      }
      if (active < kMaxActiveSlaves) {
        s.add_member(pid, m, RoleKind::ActiveSlave);
        ++active;
      } else {
        s.add_member(pid, m, RoleKind::ParkedSlave);
      }
    }
    for (NodeId m : assigned_neighbors) {
      if (active >= kMaxActiveSlaves) break;
      s.add_member(pid, m, RoleKind::ActiveSlave);
      ++active;
    }
  }
  return s;
}

enum class LinkMode { Geometric, Scatternet };

inline std::string_view to_string(LinkMode m) { return m == LinkMode::Geometric ? "geometric" : "scatternet"; }

/// Whether a and b may exchange packets. Geometric mode is plain in_range;
/// Scatternet mode additionally requires a master / active-slave pairing in
/// a shared piconet (a bridge reaches each of its masters this way).
inline bool link_allowed(const Node& a, const Node& b, const Scatternet& s, LinkMode mode) {
  if (!in_range(a, b)) return false;
  if (mode == LinkMode::Geometric) return true;
  return s.master_slave_link(a.id, b.id).has_value();
}

/// Graph for scatternet formation: mutual range among non-Off nodes.
inline Adjacency formation_graph(const World& world) {
  Adjacency adj = adjacency(world, within_mutual_range);
  for (const Node& n : world.nodes()) {
    if (n.state == NodeState::Off) adj.erase(n.id);
  }
  return adj;
}

/// True when churn has broken the formed structure: a master is Off or out
/// of range of one of its members, or a powered node has no role.
inline bool needs_reformation(const Scatternet& s, const World& world) {
  for (const Piconet& p : s.piconets()) {
    if (!world.contains(p.master)) return true;
    const Node& m = world.node(p.master);
    if (m.state == NodeState::Off) return true;
    for (const auto* group : {&p.active_slaves, &p.parked_slaves}) {
      for (NodeId sl : *group) {
        if (!within_mutual_range(m, world.node(sl))) return true;
      }
    }
  }
  for (const Node& n : world.nodes()) {
    if (n.state != NodeState::Off && !s.has_role(n.id)) return true;
  }
  return false;
}

}  // namespace btrange
