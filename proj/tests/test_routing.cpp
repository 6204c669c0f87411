#include <gtest/gtest.h>

#include <deque>

#include "btrange/routing.hpp"
#include "support.hpp"

using namespace btrange;
using namespace btrange::routing;
using testsupport::bfs;

namespace {

const NodeId A(0), B(1), C(2), D(3);
constexpr int INF = kDefaultInfinity;

std::map<NodeId, int> routes_of(const ControlMessage& m) {
  std::map<NodeId, int> out;
  for (const auto& r : std::get<Advertisement>(m.body).routes) out[r.destination] = r.cost;
  return out;
}

Adjacency path_graph(int n) {
  Adjacency g;
  for (int i = 0; i < n; ++i) {
    NodeId v(static_cast<std::uint16_t>(i));
    g[v];
    if (i > 0) {
      NodeId u(static_cast<std::uint16_t>(i - 1));
      g[u].insert(v);
      g[v].insert(u);
    }
  }
  return g;
}

// Asynchronous FIFO delivery of control messages between agents.
struct Network {
  Adjacency graph;
  std::map<NodeId, RoutingAgent> agents;
  std::deque<std::pair<NodeId, Outgoing>> wire;
  std::set<NodeId> deaf;  // nodes whose incoming messages are discarded
  std::map<std::pair<NodeId, int>, int> forwards;  // (node, kind) -> messages sent

  explicit Network(Adjacency g) : graph(std::move(g)) {
    for (const auto& [n, _] : graph) agents.emplace(n, RoutingAgent(n));
  }

  void post(NodeId from, std::vector<Outgoing> out) {
    for (auto& o : out) {
      ++forwards[{from, static_cast<int>(o.message.kind())}];
      wire.emplace_back(from, std::move(o));
    }
  }

  void start(NodeId n) { post(n, agents.at(n).start(graph.at(n), SimTime{})); }

  int drain(int limit = 1'000'000) {
    int delivered = 0;
    while (!wire.empty() && delivered < limit) {
      auto [from, o] = std::move(wire.front());
      wire.pop_front();
      ++delivered;
      if (deaf.contains(o.to)) continue;
      RoutingAgent& ag = agents.at(o.to);
      switch (o.message.kind()) {
        case ControlKind::Advertisement:
          post(o.to, ag.on_advertisement(from, o.message, SimTime{}, graph.at(o.to)).outbox);
          break;
        case ControlKind::Withdraw:
          post(o.to, ag.on_neighbor_lost(from, SimTime{}, graph.at(o.to)).outbox);
          break;
        case ControlKind::DiscoveryRequest:
          post(o.to, ag.on_discovery(from, o.message, graph.at(o.to)));
          break;
      }
    }
    return delivered;
  }
};

void expect_matches_bfs(const Adjacency& g, const std::map<NodeId, RoutingTable>& tables, const std::string& ctx) {
  for (const auto& [n, t] : tables) {
    auto dist = bfs(g, n);
    for (const auto& [m, _] : g) {
      auto it = dist.find(m);
      int expected = it == dist.end() ? INF : it->second;
      EXPECT_EQ(t.cost_to(m), expected) << ctx << " node " << n.value << " dest " << m.value;
    }
  }
}

}  // namespace

TEST(InitRouting, IsolatedNode) {
  auto r = init_routing(A, {}, SimTime{});
  EXPECT_EQ(r.table.entries().size(), 1u);
  EXPECT_EQ(r.table.cost_to(A), 0);
  EXPECT_TRUE(r.outbox.empty());
}

TEST(InitRouting, NeighborsAtCostOne) {
  auto r = init_routing(A, {B, C}, SimTime{});
  ASSERT_EQ(r.table.entries().size(), 3u);
  EXPECT_EQ(r.table.find(B)->cost, 1);
  EXPECT_EQ(r.table.find(B)->next_hop, B);
  EXPECT_EQ(r.table.find(C)->cost, 1);
  EXPECT_EQ(r.table.find(C)->next_hop, C);
}

TEST(InitRouting, QueuedAdvertisementListsTable) {
  auto r = init_routing(A, {B, C}, SimTime{});
  ASSERT_EQ(r.outbox.size(), 2u);
  const std::map<NodeId, int> expected{{A, 0}, {B, 1}, {C, 1}};
  std::set<NodeId> recipients;
  for (const auto& o : r.outbox) {
    recipients.insert(o.to);
    EXPECT_EQ(o.message.origin, A);
    EXPECT_EQ(routes_of(o.message), expected);
  }
  EXPECT_EQ(recipients, (std::set<NodeId>{B, C}));
  EXPECT_THROW(init_routing(A, {A}, SimTime{}), Error);
}

TEST(MakeAdvertisement, MinimalTable) {
  RoutingTable t(A);
  EXPECT_EQ(routes_of(make_advertisement(t, B)), (std::map<NodeId, int>{{A, 0}}));
}

TEST(MakeAdvertisement, SplitHorizonPoisonsRoutesViaRecipient) {
  RoutingTable t(A);
  t.put({B, B, 1, {}});
  t.put({D, D, 1, {}});
  t.put({C, B, 2, {}});
  EXPECT_EQ(routes_of(make_advertisement(t, B))[C], INF);
  t.put({C, D, 2, {}});
  EXPECT_EQ(routes_of(make_advertisement(t, B))[C], 2);
  // Oracle: every entry is poisoned iff its next hop is the recipient.
  for (NodeId to : {B, D}) {
    auto adv = routes_of(make_advertisement(t, to));
    for (const auto& [d, e] : t.entries()) {
      int expected = (e.next_hop == to && d != A && d != to) ? INF : e.cost;
      EXPECT_EQ(adv.at(d), expected);
    }
  }
}

TEST(ProcessAdvertisement, LineLearnsTwoHops) {
  RoutingTable a = init_routing(A, {B}, SimTime{}).table;
  RoutingTable b = init_routing(B, {A, C}, SimTime{}).table;
  EXPECT_TRUE(process_advertisement(a, B, make_advertisement(b, A), SimTime{}));
  Adjacency g{{A, {B}}, {B, {A, C}}, {C, {B}}};
  EXPECT_EQ(a.cost_to(C), bfs(g, A).at(C));
  EXPECT_EQ(a.find(C)->next_hop, B);
}

TEST(ProcessAdvertisement, RepeatIsNotAChange) {
  RoutingTable a = init_routing(A, {B}, SimTime{}).table;
  RoutingTable b = init_routing(B, {A, C}, SimTime{}).table;
  auto adv = make_advertisement(b, A);
  EXPECT_TRUE(process_advertisement(a, B, adv, SimTime{}));
  EXPECT_FALSE(process_advertisement(a, B, adv, SimTime{}));
}

TEST(ProcessAdvertisement, PoisonFromNextHopPropagates) {
  RoutingTable a = init_routing(A, {B}, SimTime{}).table;
  a.put({C, B, 2, {}});
  ControlMessage adv{B, Advertisement{{{B, 0}, {A, 1}, {C, INF}}}};
  EXPECT_TRUE(process_advertisement(a, B, adv, SimTime{}));
  // Oracle: with B–C removed, C is unreachable from A.
  Adjacency residual{{A, {B}}, {B, {A}}, {C, {}}};
  EXPECT_FALSE(bfs(residual, A).contains(C));
  EXPECT_EQ(a.cost_to(C), INF);
  EXPECT_FALSE(next_hop(a, C).usable());
}

TEST(ProcessAdvertisement, NextHopIncreaseIsTracked) {
  RoutingTable a(A);
  a.put({B, B, 1, {}});
  a.put({C, B, 2, {}});
  ControlMessage adv{B, Advertisement{{{B, 0}, {C, 4}}}};
  EXPECT_TRUE(process_advertisement(a, B, adv, SimTime{}));
  EXPECT_EQ(a.cost_to(C), 5);
}

TEST(ProcessAdvertisement, OmittedDestinationFromNextHopBecomesInfinite) {
  RoutingTable a(A);
  a.put({B, B, 1, {}});
  a.put({C, B, 2, {}});
  ControlMessage adv{B, Advertisement{{{B, 0}}}};
  EXPECT_TRUE(process_advertisement(a, B, adv, SimTime{}));
  EXPECT_EQ(a.cost_to(C), INF);
}

TEST(ProcessAdvertisement, CostsCapAtInfinity) {
  RoutingTable a(A);
  ControlMessage adv{B, Advertisement{{{B, 0}, {C, 15}, {D, 40}}}};
  process_advertisement(a, B, adv, SimTime{});
  EXPECT_EQ(a.cost_to(C), INF);
  EXPECT_EQ(a.find(D), nullptr);
  for (const auto& [d, e] : a.entries()) EXPECT_LE(e.cost, INF);
}

TEST(ProcessAdvertisement, SelfEntryIsPermanent) {
  RoutingTable a(A);
  ControlMessage adv{B, Advertisement{{{B, 0}, {A, 7}}}};
  process_advertisement(a, B, adv, SimTime{});
  EXPECT_EQ(a.cost_to(A), 0);
  a.erase(A);
  a.put({A, B, 3, {}});
  EXPECT_EQ(a.cost_to(A), 0);
}

TEST(HandleWithdraw, LineLosesFarEnd) {
  SyncExchange ex(path_graph(3));
  ex.run_to_quiescence();
  ex.withdraw(B);
  EXPECT_EQ(ex.tables().at(A).cost_to(C), INF);
  EXPECT_EQ(ex.tables().at(A).find(B), nullptr);
  ex.run_to_quiescence();
  EXPECT_EQ(ex.tables().at(A).cost_to(C), INF);
}

TEST(HandleWithdraw, UnknownNodeLeavesTableUnchanged) {
  RoutingTable t = init_routing(A, {B, C}, SimTime{}).table;
  auto before = t.entries().size();
  EXPECT_FALSE(handle_withdraw(t, NodeId(9), SimTime{}));
  EXPECT_EQ(t.entries().size(), before);
}

TEST(HandleWithdraw, CleanWithinDiameterRoundsOnRandomGraphs) {
  std::mt19937_64 rng(99);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto gg = testsupport::random_geometric_graph(seed + 1000, 12 + static_cast<int>(seed % 10), 30.0, 10.0);
    SyncExchange ex(gg.graph);
    ex.run_to_quiescence();
    expect_matches_bfs(gg.graph, ex.tables(), "pre seed " + std::to_string(seed));
    NodeId leaving(static_cast<std::uint16_t>(rng() % gg.graph.size()));
    ex.withdraw(leaving);
    int dia = std::max(1, testsupport::diameter(ex.graph()));
    for (int r = 0; r < dia; ++r) ex.round();
    for (const auto& [n, t] : ex.tables()) {
      for (const auto& [d, e] : t.entries()) {
        EXPECT_FALSE(e.next_hop == leaving && e.cost < INF) << "seed " << seed;
      }
    }
    ex.run_to_quiescence();
    for (const auto& [n, t] : ex.tables()) {
      auto dist = bfs(ex.graph(), n);
      for (const auto& [m, _] : ex.graph()) {
        int expected = dist.contains(m) ? dist.at(m) : INF;
        EXPECT_EQ(t.cost_to(m), expected) << "seed " << seed;
      }
    }
  }
}

TEST(NextHop, Cases) {
  RoutingTable t(A);
  t.put({B, B, 1, {}});
  t.put({C, B, INF, {}});
  EXPECT_EQ(next_hop(t, A).kind, NextHop::Kind::DeliverToSelf);
  auto nb = next_hop(t, B);
  EXPECT_EQ(nb.kind, NextHop::Kind::Via);
  EXPECT_EQ(nb.hop, B);
  EXPECT_EQ(next_hop(t, C).kind, NextHop::Kind::NoRoute);
  EXPECT_EQ(next_hop(t, D).kind, NextHop::Kind::NoRoute);
}

TEST(SelectNextHop, Cases) {
  std::vector<Candidate> one{{B, 4}};
  EXPECT_EQ(select_next_hop(one), B);
  std::vector<Candidate> loads{{B, 3}, {D, 1}};
  EXPECT_EQ(select_next_hop(loads), D);
  std::vector<Candidate> ties{{D, 2}, {B, 2}};
  EXPECT_EQ(select_next_hop(ties), B);
  EXPECT_FALSE(select_next_hop({}).has_value());
}

TEST(Discovery, OneHopAfterFreshJoin) {
  RoutingAgent a(A), b(B);
  auto req = a.start_discovery(B, {B});
  ASSERT_EQ(req.size(), 1u);
  auto out = b.on_discovery(A, req[0].message, {A});
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0].to, A);
  auto u = a.on_advertisement(B, out[0].message, SimTime{}, {B});
  EXPECT_TRUE(u.changed);
  EXPECT_EQ(a.table().cost_to(B), 1);
}

TEST(Discovery, ColdSenderOnFivePathLearnsFarEnd) {
  auto g = path_graph(5);
  Network net(g);
  net.deaf.insert(A);  // the sender is cold while the others converge
  for (const auto& [n, _] : g) {
    if (n != A) net.start(n);
  }
  net.drain();
  net.deaf.clear();
  EXPECT_EQ(net.agents.at(A).table().entries().size(), 1u);
  net.post(A, net.agents.at(A).start_discovery(NodeId(4), g.at(A)));
  net.drain();
  auto dist = bfs(g, A);
  EXPECT_EQ(net.agents.at(A).table().cost_to(NodeId(4)), 4);
  for (const auto& [m, h] : dist) EXPECT_EQ(net.agents.at(A).table().cost_to(m), h);
}

TEST(Discovery, DuplicateRequestIsForwardedOnce) {
  RoutingAgent x(C);
  ControlMessage req{A, DiscoveryRequest{D, INF, 0}};
  NodeSet nbrs{A, B, D};
  auto first = x.on_discovery(A, req, nbrs);
  auto second = x.on_discovery(B, req, nbrs);
  auto count_requests = [](const std::vector<Outgoing>& v) {
    return std::count_if(v.begin(), v.end(),
                         [](const Outgoing& o) { return o.message.kind() == ControlKind::DiscoveryRequest; });
  };
  EXPECT_EQ(count_requests(first), 2);  // to B and D, not back to the origin
  EXPECT_EQ(count_requests(second), 0);
  EXPECT_EQ(second.size(), 1u);  // the advertisement reply only
  // A new round from the same origin floods again.
  ControlMessage again{A, DiscoveryRequest{D, INF, 1}};
  EXPECT_EQ(count_requests(x.on_discovery(A, again, nbrs)), 2);
}

TEST(Discovery, TtlBoundsTheFlood) {
  RoutingAgent x(C);
  auto out = x.on_discovery(A, ControlMessage{A, DiscoveryRequest{D, 1, 0}}, {A, B});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].message.kind(), ControlKind::Advertisement);
}

TEST(Convergence, SyncExchangeMatchesBfs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto gg = testsupport::random_geometric_graph(seed, 2 + static_cast<int>(seed % 24), 30.0, 10.0);
    SyncExchange ex(gg.graph);
    ex.run_to_quiescence();
    expect_matches_bfs(gg.graph, ex.tables(), "seed " + std::to_string(seed));
  }
}

TEST(Convergence, AsyncAgentsMatchBfsAndQuiesce) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto gg = testsupport::random_geometric_graph(seed + 500, 3 + static_cast<int>(seed % 23), 30.0, 10.0);
    Network net(gg.graph);
    for (const auto& [n, _] : gg.graph) net.start(n);
    net.drain(5'000'000);
    ASSERT_TRUE(net.wire.empty()) << "no fixed point, seed " << seed;
    std::map<NodeId, RoutingTable> tables;
    for (const auto& [n, ag] : net.agents) tables.emplace(n, ag.table());
    expect_matches_bfs(gg.graph, tables, "seed " + std::to_string(seed));
  }
}

TEST(Agent, RouteOptionsAndEqualCostHops) {
  // Diamond A-B-C, A-D-C: A reaches C at cost 2 through B or D.
  Adjacency g{{A, {B, D}}, {B, {A, C}}, {C, {B, D}}, {D, {A, C}}};
  Network net(g);
  for (const auto& [n, _] : g) net.start(n);
  net.drain();
  const auto& a = net.agents.at(A);
  EXPECT_EQ(a.table().cost_to(C), 2);
  EXPECT_EQ(a.equal_cost_hops(C), (std::vector<NodeId>{B, D}));
  auto opts = a.route_options(C);
  ASSERT_EQ(opts.size(), 2u);
  EXPECT_EQ(opts[0].second, 2);
  EXPECT_EQ(opts[1].second, 2);
}

TEST(Agent, NeighborLossPoisonsRoutesThroughIt) {
  Adjacency g = path_graph(3);
  Network net(g);
  for (const auto& [n, _] : g) net.start(n);
  net.drain();
  auto& a = net.agents.at(A);
  EXPECT_EQ(a.table().cost_to(C), 2);
  auto u = a.on_neighbor_lost(B, SimTime::from_s(3), {});
  EXPECT_TRUE(u.changed);
  EXPECT_EQ(a.table().cost_to(C), INF);
  EXPECT_FALSE(a.known_neighbors().contains(B));
  EXPECT_TRUE(a.route_options(C).empty());
}

TEST(RoutingTable, JsonDump) {
  RoutingTable t(A);
  t.put({B, B, 1, {}});
  auto j = t.to_json(SimTime::from_ms(1500));
  EXPECT_EQ(j["node"], 0);
  EXPECT_DOUBLE_EQ(j["time"].get<double>(), 1.5);
  EXPECT_EQ(j["entries"].size(), 2u);
  EXPECT_EQ(j["entries"][1]["dest"], 1);
  EXPECT_EQ(j["entries"][1]["next_hop"], 1);
  EXPECT_EQ(j["entries"][1]["cost"], 1);
}
