// Modified distance-vector routing: hop-count tables, split-horizon with
// poisoned reverse, triggered updates, withdraw handling and on-demand
// discovery that solicits ordinary advertisements.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <variant>
#include <vector>

#include "json.hpp"

#include "btrange/core.hpp"
#include "btrange/topology.hpp"

namespace btrange::routing {

inline constexpr int kDefaultInfinity = 16;

struct RouteEntry {
  NodeId destination;
  NodeId next_hop;
  int cost = 0;
  SimTime last_updated;
};

class RoutingTable {
 public:
  explicit RoutingTable(NodeId owner, int infinity = kDefaultInfinity) : owner_(owner), infinity_(infinity) {
    entries_[owner] = RouteEntry{owner, owner, 0, SimTime{}};
  }

  NodeId owner() const { return owner_; }
  int infinity() const { return infinity_; }
  const std::map<NodeId, RouteEntry>& entries() const { return entries_; }

  const RouteEntry* find(NodeId dest) const {
    auto it = entries_.find(dest);
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Cost to `dest`, or infinity when unknown.
  int cost_to(NodeId dest) const {
    const RouteEntry* e = find(dest);
    return e ? e->cost : infinity_;
  }

  /// Inserts or replaces an entry. The self-entry is immutable.
  void put(const RouteEntry& e) {
    if (e.destination == owner_) return;
    entries_[e.destination] = e;
    entries_[e.destination].cost = std::clamp(e.cost, 1, infinity_);
  }

  void erase(NodeId dest) {
    if (dest != owner_) entries_.erase(dest);
  }

  nlohmann::json to_json(SimTime now) const {
    nlohmann::json es = nlohmann::json::array();
    for (const auto& [d, e] : entries_) {
      es.push_back({{"dest", d.value}, {"next_hop", e.next_hop.value}, {"cost", e.cost}});
    }
    return {{"node", owner_.value}, {"time", now.us_exact() / 1e6}, {"entries", es}};
  }

 private:
  NodeId owner_;
  int infinity_;
  std::map<NodeId, RouteEntry> entries_;
};

enum class ControlKind { Advertisement, Withdraw, DiscoveryRequest };

inline std::string_view to_string(ControlKind k) {
  switch (k) {
    case ControlKind::Advertisement: return "advertisement";
    case ControlKind::Withdraw: return "withdraw";
    case ControlKind::DiscoveryRequest: return "discovery";
  }
  return "?";
}

struct AdvertisedRoute {
  NodeId destination;
  int cost = 0;
  friend bool operator==(const AdvertisedRoute&, const AdvertisedRoute&) = default;
};

struct Advertisement {
  std::vector<AdvertisedRoute> routes;
};
struct Withdraw {};
struct DiscoveryRequest {
  NodeId target;
  int ttl = kDefaultInfinity;
  /// Per-origin discovery counter; with (origin, target) it keys duplicate
  /// suppression so a repeated discovery floods again.
  std::uint32_t round = 0;
};

struct ControlMessage {
  NodeId origin;
  std::variant<Advertisement, Withdraw, DiscoveryRequest> body;

  ControlKind kind() const { return static_cast<ControlKind>(body.index()); }

  /// Wire size: 32-bit header plus 16 bits per advertised route.
  std::int64_t size_bits() const {
    if (auto* a = std::get_if<Advertisement>(&body)) return 32 + 16 * static_cast<std::int64_t>(a->routes.size());
    if (std::holds_alternative<DiscoveryRequest>(body)) return 48;
    return 32;
  }
};

struct Outgoing {
  NodeId to;
  ControlMessage message;
};

/// Advertisement to one neighbor. Routes learned through that neighbor are
/// reported at infinity (split horizon with poisoned reverse). The
/// recipient's own entry is sent as is; it ignores routes to itself anyway.
inline ControlMessage make_advertisement(const RoutingTable& t, NodeId to_neighbor) {
  Advertisement adv;
  adv.routes.reserve(t.entries().size());
  for (const auto& [d, e] : t.entries()) {
    int cost = (e.next_hop == to_neighbor && d != t.owner() && d != to_neighbor) ? t.infinity() : e.cost;
    adv.routes.push_back({d, cost});
  }
  return ControlMessage{t.owner(), std::move(adv)};
}

inline std::vector<Outgoing> advertise_to_all(const RoutingTable& t, const NodeSet& neighbors) {
  std::vector<Outgoing> out;
  for (NodeId n : neighbors) out.push_back({n, make_advertisement(t, n)});
  return out;
}

struct InitResult {
  RoutingTable table;
  std::vector<Outgoing> outbox;
};

/// Fresh table for a starting node: itself at 0, each neighbor at 1, and an
/// advertisement queued to every neighbor.
inline InitResult init_routing(NodeId n, const NodeSet& neighbors, SimTime now, int infinity = kDefaultInfinity) {
  if (neighbors.contains(n)) throw Error("node listed as its own neighbor");
  RoutingTable t(n, infinity);
  for (NodeId m : neighbors) t.put({m, m, 1, now});
  auto outbox = advertise_to_all(t, neighbors);
  return {std::move(t), std::move(outbox)};
}

/// Bellman-Ford relaxation of one advertisement from neighbor `from`.
/// A route is adopted when strictly cheaper; a route already through `from`
/// follows whatever `from` now reports, including increases and omissions.
/// Returns whether any entry's (next_hop, cost) changed.
inline bool process_advertisement(RoutingTable& t, NodeId from, const ControlMessage& adv, SimTime now) {
  const auto* body = std::get_if<Advertisement>(&adv.body);
  if (!body) throw Error("process_advertisement given a non-advertisement");
  const int inf = t.infinity();
  bool changed = false;
  std::set<NodeId> mentioned;

  for (const AdvertisedRoute& r : body->routes) {
    mentioned.insert(r.destination);
    if (r.destination == t.owner()) continue;
    int candidate = std::min(std::max(r.cost, 0) + 1, inf);
    const RouteEntry* cur = t.find(r.destination);
    if (!cur) {
      if (candidate < inf) {
        t.put({r.destination, from, candidate, now});
        changed = true;
      }
      continue;
    }
    if (cur->next_hop == from) {
      if (cur->cost != candidate) changed = true;
      t.put({r.destination, from, candidate, now});
    } else if (candidate < cur->cost) {
      t.put({r.destination, from, candidate, now});
      changed = true;
    }
  }

  // Advertisements are complete vectors: a destination the next hop no
  // longer lists is unreachable through it.
  std::vector<NodeId> dropped;
  for (const auto& [d, e] : t.entries()) {
    if (d != t.owner() && e.next_hop == from && e.cost < inf && !mentioned.contains(d)) dropped.push_back(d);
  }
  for (NodeId d : dropped) {
    RouteEntry e = *t.find(d);
    e.cost = inf;
    e.last_updated = now;
    t.put(e);
    changed = true;
  }
  return changed;
}

/// Removes the departing node and poisons every route through it. The
/// withdraw is not re-flooded; the poisoned routes propagate instead.
inline bool handle_withdraw(RoutingTable& t, NodeId leaving, SimTime now) {
  if (leaving == t.owner()) return false;
  bool changed = false;
  if (t.find(leaving)) {
    t.erase(leaving);
    changed = true;
  }
  std::vector<NodeId> poisoned;
  for (const auto& [d, e] : t.entries()) {
    if (d != t.owner() && e.next_hop == leaving && e.cost < t.infinity()) poisoned.push_back(d);
  }
  for (NodeId d : poisoned) {
    RouteEntry e = *t.find(d);
    e.cost = t.infinity();
    e.last_updated = now;
    t.put(e);
    changed = true;
  }
  return changed;
}

struct NextHop {
  enum class Kind { DeliverToSelf, Via, NoRoute };
  Kind kind = Kind::NoRoute;
  NodeId hop;

  bool usable() const { return kind != Kind::NoRoute; }
};

inline NextHop next_hop(const RoutingTable& t, NodeId dest) {
  if (dest == t.owner()) return {NextHop::Kind::DeliverToSelf, dest};
  const RouteEntry* e = t.find(dest);
  if (e && e->cost < t.infinity()) return {NextHop::Kind::Via, e->next_hop};
  return {};
}

struct Candidate {
  NodeId neighbor;
  std::size_t queue_depth = 0;
};

/// Among equal-cost first hops, the least loaded; ties go to the lower id.
inline std::optional<NodeId> select_next_hop(std::span<const Candidate> candidates) {
  if (candidates.empty()) return std::nullopt;
  auto best = std::min_element(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.queue_depth, a.neighbor) < std::tie(b.queue_depth, b.neighbor);
  });
  return best->neighbor;
}

/// Discovery flood opening: one request per neighbor, TTL = infinity.
inline std::vector<Outgoing> trigger_discovery(NodeId n, NodeId target, const NodeSet& neighbors, std::uint32_t round,
                                               int infinity = kDefaultInfinity) {
  std::vector<Outgoing> out;
  for (NodeId m : neighbors) out.push_back({m, ControlMessage{n, DiscoveryRequest{target, infinity, round}}});
  return out;
}

/// Per-node protocol state driven by delivered control messages: the table,
/// what each neighbor last advertised, and discovery duplicate suppression.
class RoutingAgent {
 public:
  explicit RoutingAgent(NodeId self, int infinity = kDefaultInfinity) : table_(self, infinity) {}

  NodeId self() const { return table_.owner(); }
  const RoutingTable& table() const { return table_; }
  int infinity() const { return table_.infinity(); }

  /// Neighbors heard from and not since withdrawn or expired.
  NodeSet known_neighbors() const {
    NodeSet out;
    for (const auto& [n, _] : last_heard_) out.insert(n);
    return out;
  }

  std::optional<SimTime> last_heard(NodeId n) const {
    auto it = last_heard_.find(n);
    if (it == last_heard_.end()) return std::nullopt;
    return it->second;
  }

  /// Cold start (or restart after being Off): all prior state is discarded.
  std::vector<Outgoing> start(const NodeSet& neighbors, SimTime now) {
    auto r = init_routing(self(), neighbors, now, infinity());
    table_ = std::move(r.table);
    vectors_.clear();
    last_heard_.clear();
    seen_discoveries_.clear();
    for (NodeId m : neighbors) last_heard_[m] = now;
    return std::move(r.outbox);
  }

  std::vector<Outgoing> periodic(const NodeSet& link_neighbors) const {
    return advertise_to_all(table_, link_neighbors);
  }

  struct Update {
    bool changed = false;
    std::vector<Outgoing> outbox;
  };

  Update on_advertisement(NodeId from, const ControlMessage& adv, SimTime now, const NodeSet& link_neighbors) {
    last_heard_[from] = now;
    auto& vec = vectors_[from];
    vec.clear();
    for (const auto& r : std::get<Advertisement>(adv.body).routes) vec[r.destination] = r.cost;
    Update u;
    u.changed = process_advertisement(table_, from, adv, now);
    if (u.changed) u.outbox = advertise_to_all(table_, link_neighbors);
    return u;
  }

  /// Departure of a neighbor, announced (withdraw) or detected (expiry).
  Update on_neighbor_lost(NodeId leaving, SimTime now, const NodeSet& link_neighbors) {
    last_heard_.erase(leaving);
    vectors_.erase(leaving);
    Update u;
    u.changed = handle_withdraw(table_, leaving, now);
    if (u.changed) u.outbox = advertise_to_all(table_, link_neighbors);
    return u;
  }

  /// Neighbors silent for at least `budget` as of `now`.
  std::vector<NodeId> stale_neighbors(SimTime now, SimTime budget) const {
    std::vector<NodeId> out;
    for (const auto& [n, t] : last_heard_) {
      if (now - t >= budget) out.push_back(n);
    }
    return out;
  }

  std::vector<Outgoing> start_discovery(NodeId target, const NodeSet& link_neighbors) {
    std::uint32_t round = next_round_++;
    seen_discoveries_.insert({self(), target, round});
    return trigger_discovery(self(), target, link_neighbors, round, infinity());
  }

  /// Answers a discovery request with a full advertisement to the sender
  /// and re-forwards it once per (origin, target, round).
  std::vector<Outgoing> on_discovery(NodeId from, const ControlMessage& msg, const NodeSet& link_neighbors) {
    const auto& req = std::get<DiscoveryRequest>(msg.body);
    std::vector<Outgoing> out;
    out.push_back({from, make_advertisement(table_, from)});
    auto key = std::make_tuple(msg.origin, req.target, req.round);
    if (seen_discoveries_.contains(key)) return out;
    seen_discoveries_.insert(key);
    if (req.ttl <= 1) return out;
    for (NodeId m : link_neighbors) {
      if (m == from || m == msg.origin) continue;
      out.push_back({m, ControlMessage{msg.origin, DiscoveryRequest{req.target, req.ttl - 1, req.round}}});
    }
    return out;
  }

  /// Every known neighbor with a finite advertised route to `dest`, paired
  /// with the resulting cost, cheapest first. The table's own next hop is
  /// always included while its route is finite.
  std::vector<std::pair<NodeId, int>> route_options(NodeId dest) const {
    std::map<NodeId, int> best;
    if (const RouteEntry* e = table_.find(dest); e && e->cost < infinity() && dest != self()) best[e->next_hop] = e->cost;
    for (const auto& [n, vec] : vectors_) {
      if (!last_heard_.contains(n)) continue;
      int c = infinity();
      if (n == dest) c = 1;
      else if (auto it = vec.find(dest); it != vec.end()) c = std::min(it->second + 1, infinity());
      if (c < infinity()) {
        auto [it, inserted] = best.emplace(n, c);
        if (!inserted) it->second = std::min(it->second, c);
      }
    }
    std::vector<std::pair<NodeId, int>> out(best.begin(), best.end());
    std::stable_sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.second < b.second; });
    return out;
  }

  /// First hops whose cost equals the table's cost to `dest`.
  std::vector<NodeId> equal_cost_hops(NodeId dest) const {
    std::vector<NodeId> out;
    int c = table_.cost_to(dest);
    if (c >= infinity() || dest == self()) return out;
    for (auto [n, cost] : route_options(dest)) {
      if (cost == c) out.push_back(n);
    }
    return out;
  }

 private:
  RoutingTable table_;
  std::map<NodeId, std::map<NodeId, int>> vectors_;
  std::map<NodeId, SimTime> last_heard_;
  std::set<std::tuple<NodeId, NodeId, std::uint32_t>> seen_discoveries_;
  std::uint32_t next_round_ = 0;
};

/// Lock-step exchange over a static graph: each round every node
/// advertises to every neighbor from the same snapshot of tables.
class SyncExchange {
 public:
  explicit SyncExchange(Adjacency graph, int infinity = kDefaultInfinity) : graph_(std::move(graph)) {
    for (const auto& [n, nbrs] : graph_) tables_.emplace(n, init_routing(n, nbrs, SimTime{}, infinity).table);
  }

  /// One exchange round. Returns whether any table changed.
  bool round() {
    std::vector<std::tuple<NodeId, NodeId, ControlMessage>> inflight;
    for (const auto& [n, nbrs] : graph_) {
      for (NodeId m : nbrs) inflight.emplace_back(n, m, make_advertisement(tables_.at(n), m));
    }
    bool changed = false;
    for (auto& [from, to, msg] : inflight) changed |= process_advertisement(tables_.at(to), from, msg, SimTime{});
    ++rounds_;
    return changed;
  }

  /// Runs rounds until nothing changes; returns the number of rounds run.
  int run_to_quiescence(int max_rounds = 1000) {
    int r = 0;
    while (r < max_rounds) {
      ++r;
      if (!round()) break;
    }
    return r;
  }

  /// `leaving` notifies its neighbors and disappears from the graph.
  void withdraw(NodeId leaving) {
    auto nbrs = graph_.at(leaving);
    for (NodeId m : nbrs) {
      handle_withdraw(tables_.at(m), leaving, SimTime{});
      graph_.at(m).erase(leaving);
    }
    graph_.erase(leaving);
    tables_.erase(leaving);
  }

  const Adjacency& graph() const { return graph_; }
  const std::map<NodeId, RoutingTable>& tables() const { return tables_; }
  int rounds() const { return rounds_; }

 private:
  Adjacency graph_;
  std::map<NodeId, RoutingTable> tables_;
  int rounds_ = 0;
};

}  // namespace btrange::routing
