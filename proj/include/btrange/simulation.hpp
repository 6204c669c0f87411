// Deterministic discrete-event kernel. One Simulation owns the world, the
// scatternet, each node's routing and transport state, and the trace; all
// randomness derives from the scenario seed.
#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "btrange/baseband.hpp"
#include "btrange/event_queue.hpp"
#include "btrange/metrics.hpp"
#include "btrange/routing.hpp"
#include "btrange/scatternet.hpp"
#include "btrange/scenario.hpp"
#include "btrange/topology.hpp"
#include "btrange/transport.hpp"

namespace btrange::sim {

class ConfigError : public Error {
 public:
  ConfigError(std::vector<Diagnostic> diags) : Error(render(diags)), diagnostics(std::move(diags)) {}
  std::vector<Diagnostic> diagnostics;

 private:
  static std::string render(const std::vector<Diagnostic>& d) {
    std::string s = "invalid scenario:";
    for (const auto& x : d) s += "\n  " + x.str();
    return s;
  }
};

using Frame = std::variant<routing::ControlMessage, transport::DataPacket, transport::AckPacket>;

struct MotionTick {};
struct StateChangeAction {
  NodeId node;
  NodeState state;
};
struct AdvertisementTick {
  NodeId node;
};
struct AckDeadline {
  std::uint64_t msg_id;
  std::uint32_t generation;
};
struct ExpiryCheck {
  NodeId node;
  NodeId neighbor;
  std::uint32_t epoch;
};
struct Arrival {
  NodeId from;
  NodeId to;
  std::uint32_t sender_epoch;
  std::optional<int> channel;
  Frame frame;
};
struct TrafficAction {
  std::size_t index;
};
struct WithdrawAction {
  NodeId node;
};

using Payload = std::variant<std::monostate, MotionTick, StateChangeAction, AdvertisementTick, AckDeadline,
                             ExpiryCheck, Arrival, TrafficAction, WithdrawAction>;

inline std::string to_hex(const transport::Bytes& b) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto c : b) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 0xf]);
  }
  return s;
}

struct RunResult {
  Metrics metrics;
  std::vector<TraceRecord> trace;
  std::vector<DeliveryRecord> deliveries;
  std::vector<std::string> violations;

  json report() const { return summarize(metrics); }

  std::string trace_ndjson() const {
    std::string out;
    for (const auto& r : trace) {
      out += r.to_json().dump();
      out += '\n';
    }
    return out;
  }
};

struct Options {
  /// Check structural invariants after every event and collect violations.
  bool audit = false;
};

class Simulation {
 public:
  Simulation(ScenarioConfig config, std::uint64_t seed, Options opts = {})
      : config_(std::move(config)), seed_(seed), opts_(opts) {
    if (auto diags = validate(config_); !diags.empty()) throw ConfigError(std::move(diags));
    setup();
  }

  /// Executes every event due at or before min(t, horizon).
  void run_until(SimTime t) {
    const SimTime limit = std::min(t, config_.horizon);
    while (auto ev = queue_.pop_until(limit)) execute(*ev);
    queue_.advance_to(limit);
  }

  /// Runs to the horizon, resolves outstanding transfers and returns the
  /// metrics, trace and delivery records.
  RunResult finish() {
    run_until(config_.horizon);
    finalize();
    RunResult r;
    r.metrics = metrics_;
    r.trace = trace_;
    r.deliveries = deliveries_;
    std::sort(r.deliveries.begin(), r.deliveries.end(),
              [](const DeliveryRecord& a, const DeliveryRecord& b) { return a.msg_id < b.msg_id; });
    r.violations = violations_;
    return r;
  }

  SimTime now() const { return queue_.now(); }
  const ScenarioConfig& config() const { return config_; }
  const World& world() const { return world_; }
  const Scatternet& scatternet() const { return scatternet_; }
  const Adjacency& links() const { return links_; }
  const Metrics& metrics() const { return metrics_; }
  const routing::RoutingAgent& agent(NodeId n) const { return runtime(n).agent; }
  std::size_t reformations() const { return reformations_; }

  json tables_json() const {
    json out = json::array();
    for (const auto& [id, rt] : nodes_) out.push_back(rt.agent.table().to_json(now()));
    return out;
  }

 private:
  struct QueuedFrame {
    NodeId to;
    Frame frame;
  };

  struct NodeRuntime {
    explicit NodeRuntime(NodeId id, int inf) : agent(id, inf) {}
    routing::RoutingAgent agent;
    std::deque<QueuedFrame> control_q;
    std::deque<QueuedFrame> data_q;
    std::map<NodeId, std::size_t> data_depth;
    bool transmitting = false;
    bool leaving = false;
    std::uint32_t epoch = 0;
    std::set<NodeId> expiry_pending;
    transport::Reassembler reassembler;
  };

  NodeRuntime& runtime(NodeId n) { return nodes_.at(n); }
  const NodeRuntime& runtime(NodeId n) const { return nodes_.at(n); }

  // --- setup -------------------------------------------------------------

  void setup() {
    for (const NodeSpec& s : config_.nodes) {
      Node n;
      n.id = s.id;
      n.radio = s.range_m ? RadioClass::with_range(s.device_class, *s.range_m) : RadioClass::defaults(s.device_class);
      n.state = s.initial_state;
      n.waypoints = s.waypoints;
      n.position = s.waypoints.empty() ? s.position : position_at(n, SimTime{});
      if (!s.waypoints.empty()) has_motion_ = true;
      world_.add(std::move(n));
      nodes_.emplace(s.id, NodeRuntime(s.id, config_.protocol.infinity));
    }
    if (config_.link_mode == LinkMode::Scatternet) reform();
    recompute_links();

    for (const Node& n : world_.nodes()) {
      if (n.state == NodeState::Active) start_node(n.id);
    }
    for (const Node& n : world_.nodes()) schedule(config_.protocol.t_adv, EventKind::AdvertisementTimer, AdvertisementTick{n.id});
    if (has_motion_) schedule(config_.protocol.motion_cadence, EventKind::MotionUpdate, MotionTick{});
    for (const ActionSpec& a : config_.actions) {
      if (a.kind == ActionSpec::Kind::SetState) {
        schedule(a.time, EventKind::StateChange, StateChangeAction{a.node, a.state});
      } else {
        schedule(a.time, EventKind::ScenarioAction, WithdrawAction{a.node});
      }
    }
    for (std::size_t i = 0; i < config_.traffic.size(); ++i) {
      schedule(config_.traffic[i].time, EventKind::ScenarioAction, TrafficAction{i});
    }
  }

  void schedule(SimTime at, EventKind kind, Payload p) {
    if (at > config_.horizon) return;
    queue_.schedule(at, kind, std::move(p));
  }

  // --- topology ----------------------------------------------------------

  void reform() {
    scatternet_ = form_scatternet(formation_graph(world_), derive_seed(seed_, "scatternet"));
    piconet_busy_.clear();
    ++reformations_;
  }

  void recompute_links() {
    links_ = adjacency(world_, [this](const Node& a, const Node& b) {
      return link_allowed(a, b, scatternet_, config_.link_mode);
    });
  }

  void refresh_topology() {
    if (config_.link_mode == LinkMode::Scatternet && needs_reformation(scatternet_, world_)) reform();
    recompute_links();
  }

  const NodeSet& link_neighbors(NodeId n) const { return links_.at(n); }
  bool linked(NodeId a, NodeId b) const { return links_.at(a).contains(b); }

  bool active(NodeId n) const { return world_.node(n).state == NodeState::Active; }

  // --- trace -------------------------------------------------------------

  void emit(std::string kind, std::optional<NodeId> node, json detail) {
    trace_.push_back(TraceRecord{queue_.now(), trace_.size(), std::move(kind), node, std::move(detail)});
  }

  void count_drop(const char* reason, NodeId at, json detail) {
    ++metrics_.drops[reason];
    detail["reason"] = reason;
    emit(record_kind::kDrop, at, std::move(detail));
  }

  // --- event dispatch ----------------------------------------------------

  void execute(const Event<Payload>& ev) {
    if (opts_.audit && ev.time < last_event_time_) violations_.push_back("causality: event earlier than predecessor");
    last_event_time_ = ev.time;
    ++metrics_.events[std::string(to_string(ev.kind))];

    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, MotionTick>) on_motion(ev);
          else if constexpr (std::is_same_v<T, StateChangeAction>) on_state_change(ev, p);
          else if constexpr (std::is_same_v<T, AdvertisementTick>) on_advertisement_timer(ev, p);
          else if constexpr (std::is_same_v<T, AckDeadline>) on_ack_timer(ev, p);
          else if constexpr (std::is_same_v<T, ExpiryCheck>) on_expiry(ev, p);
          else if constexpr (std::is_same_v<T, Arrival>) on_arrival(ev, p);
          else if constexpr (std::is_same_v<T, TrafficAction>) on_traffic(ev, p);
          else if constexpr (std::is_same_v<T, WithdrawAction>) on_withdraw_action(ev, p);
        },
        ev.payload);

    if (opts_.audit) audit();
  }

  void log_event(const Event<Payload>& ev, std::optional<NodeId> node, json detail = json::object()) {
    emit(std::string(to_string(ev.kind)), node, std::move(detail));
  }

  void on_motion(const Event<Payload>& ev) {
    log_event(ev, std::nullopt);
    apply_motion(world_, ev.time);
    refresh_topology();
    schedule(ev.time + config_.protocol.motion_cadence, EventKind::MotionUpdate, MotionTick{});
  }

  void on_state_change(const Event<Payload>& ev, const StateChangeAction& a) {
    NodeState before = world_.node(a.node).state;
    log_event(ev, a.node, {{"from", to_string(before)}, {"to", to_string(a.state)}});
    set_node_state(world_, a.node, a.state, ev.time);
    if (before == NodeState::Active && a.state != NodeState::Active) silence_node(a.node);
    refresh_topology();
    if (before != NodeState::Active && a.state == NodeState::Active) start_node(a.node);
  }

  void on_advertisement_timer(const Event<Payload>& ev, const AdvertisementTick& t) {
    log_event(ev, t.node);
    schedule(ev.time + config_.protocol.t_adv, EventKind::AdvertisementTimer, t);
    NodeRuntime& rt = runtime(t.node);
    if (!active(t.node) || rt.leaving) return;
    send_control(t.node, rt.agent.periodic(link_neighbors(t.node)));
  }

  void on_expiry(const Event<Payload>& ev, const ExpiryCheck& c) {
    log_event(ev, c.node, {{"neighbor", c.neighbor.value}});
    NodeRuntime& rt = runtime(c.node);
    if (c.epoch != rt.epoch) return;
    rt.expiry_pending.erase(c.neighbor);
    if (!active(c.node)) return;
    auto heard = rt.agent.last_heard(c.neighbor);
    if (!heard) return;
    if (ev.time - *heard >= expiry_budget()) {
      auto u = rt.agent.on_neighbor_lost(c.neighbor, ev.time, link_neighbors(c.node));
      send_control(c.node, std::move(u.outbox));
    } else {
      arm_expiry(c.node, c.neighbor, *heard + expiry_budget());
    }
  }

  SimTime expiry_budget() const { return config_.protocol.t_adv * config_.protocol.expiry_periods; }

  void arm_expiry(NodeId node, NodeId neighbor, SimTime at) {
    NodeRuntime& rt = runtime(node);
    if (!rt.expiry_pending.insert(neighbor).second) return;
    schedule(at, EventKind::NeighborExpiry, ExpiryCheck{node, neighbor, rt.epoch});
  }

  void start_node(NodeId n) {
    NodeRuntime& rt = runtime(n);
    rt.expiry_pending.clear();
    ++rt.epoch;
    auto out = rt.agent.start(link_neighbors(n), queue_.now());
    for (NodeId m : link_neighbors(n)) arm_expiry(n, m, queue_.now() + expiry_budget());
    send_control(n, std::move(out));
  }

  void silence_node(NodeId n) {
    NodeRuntime& rt = runtime(n);
    rt.control_q.clear();
    rt.data_q.clear();
    rt.data_depth.clear();
    rt.transmitting = false;
    rt.leaving = false;
    ++rt.epoch;
  }

  void on_withdraw_action(const Event<Payload>& ev, const WithdrawAction& w) {
    log_event(ev, w.node, {{"action", "withdraw"}});
    NodeRuntime& rt = runtime(w.node);
    if (!active(w.node) || rt.leaving) return;
    std::vector<routing::Outgoing> out;
    for (NodeId m : link_neighbors(w.node)) out.push_back({m, routing::ControlMessage{w.node, routing::Withdraw{}}});
    send_control(w.node, std::move(out));
    rt.leaving = true;
    maybe_depart(w.node);
  }

  /// A withdrawing node powers off once its withdraw messages are out.
  void maybe_depart(NodeId n) {
    NodeRuntime& rt = runtime(n);
    if (rt.leaving && !rt.transmitting && rt.control_q.empty()) {
      rt.leaving = false;
      schedule(queue_.now(), EventKind::StateChange, StateChangeAction{n, NodeState::Off});
    }
  }

  // --- transmission ------------------------------------------------------

  void send_control(NodeId from, std::vector<routing::Outgoing> out) {
    for (auto& o : out) enqueue(from, o.to, Frame{std::move(o.message)});
  }

  void enqueue(NodeId from, NodeId to, Frame f) {
    NodeRuntime& rt = runtime(from);
    if (!active(from)) return;
    if (std::holds_alternative<routing::ControlMessage>(f)) {
      if (rt.leaving && std::get<routing::ControlMessage>(f).kind() != routing::ControlKind::Withdraw) return;
      rt.control_q.push_back({to, std::move(f)});
    } else {
      if (rt.leaving) return;
      ++rt.data_depth[to];
      rt.data_q.push_back({to, std::move(f)});
    }
    try_start(from);
  }

  baseband::SlotClass frame_slots(const Frame& f) const {
    const int mult = config_.rate_multiplier;
    const std::int64_t cap = static_cast<std::int64_t>(baseband::kMaxPayloadBits) * mult;
    if (auto* c = std::get_if<routing::ControlMessage>(&f)) return baseband::slots_for_payload(std::min(c->size_bits(), cap), mult);
    if (auto* d = std::get_if<transport::DataPacket>(&f)) return d->slot_class;
    return baseband::slots_for_payload(transport::kAckBits, mult);
  }

  void try_start(NodeId n) {
    NodeRuntime& rt = runtime(n);
    while (!rt.transmitting && active(n)) {
      QueuedFrame qf;
      if (!rt.control_q.empty()) {
        qf = std::move(rt.control_q.front());
        rt.control_q.pop_front();
      } else if (!rt.data_q.empty() && !rt.leaving) {
        qf = std::move(rt.data_q.front());
        rt.data_q.pop_front();
        if (--rt.data_depth[qf.to] == 0) rt.data_depth.erase(qf.to);
      } else {
        break;
      }
      if (!linked(n, qf.to)) {
        count_drop(drop::kLinkLoss, n, {{"to", qf.to.value}, {"at", "transmit"}});
        continue;
      }
      transmit(n, std::move(qf));
    }
    maybe_depart(n);
  }

  void transmit(NodeId n, QueuedFrame qf) {
    NodeRuntime& rt = runtime(n);
    const SimTime now = queue_.now();
    const baseband::SlotClass sc = frame_slots(qf.frame);
    SimTime start = now;
    std::optional<int> channel;
    if (config_.link_mode == LinkMode::Scatternet) {
      auto link = scatternet_.master_slave_link(n, qf.to);
      RoleKind role = link->a_is_master ? RoleKind::Master : RoleKind::ActiveSlave;
      SimTime earliest = std::max(now, piconet_busy_[link->piconet.value]);
      std::uint64_t slot = baseband::next_owned_slot(baseband::slot_at_or_after(earliest), role);
      start = baseband::slot_start(slot);
      const NodeId master = scatternet_.piconet(link->piconet).master;
      channel = baseband::hop_channel({derive_seed(seed_, "hop/" + to_string(master))}, slot);
      piconet_busy_[link->piconet.value] = start + baseband::tx_duration(sc);
    }
    const SimTime end = start + baseband::tx_duration(sc);
    rt.transmitting = true;

    if (auto* c = std::get_if<routing::ControlMessage>(&qf.frame)) {
      std::string kind(routing::to_string(c->kind()));
      ++metrics_.control_packets[kind];
      emit(record_kind::kControlTx, n, {{"control", kind}, {"to", qf.to.value}, {"slots", sc.slots()}});
    } else {
      ++metrics_.data_packets_forwarded;
      json d = {{"to", qf.to.value}, {"slots", sc.slots()}};
      if (auto* p = std::get_if<transport::DataPacket>(&qf.frame)) {
        d["frame"] = "data";
        d["msg_id"] = p->msg_id;
      } else {
        d["frame"] = "ack";
        d["msg_id"] = std::get<transport::AckPacket>(qf.frame).msg_id;
      }
      emit(record_kind::kDataTx, n, std::move(d));
    }
    queue_.schedule(end, EventKind::PacketArrival, Arrival{n, qf.to, rt.epoch, channel, std::move(qf.frame)});
  }

  static json frame_detail(const Arrival& a) {
    json d = {{"from", a.from.value}};
    if (a.channel) d["ch"] = *a.channel;
    std::visit(
        [&](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, routing::ControlMessage>) {
            d["frame"] = "control";
            d["control"] = routing::to_string(f.kind());
          } else if constexpr (std::is_same_v<T, transport::DataPacket>) {
            d["frame"] = "data";
            d["msg_id"] = f.msg_id;
            d["src"] = f.src.value;
            d["dst"] = f.dst.value;
            d["fragment"] = f.fragment_index;
            d["fragments"] = f.fragment_count;
            d["bits"] = f.sealed_payload.bit_length();
            d["payload_hex"] = to_hex(f.sealed_payload.bytes());
          } else {
            d["frame"] = "ack";
            d["msg_id"] = f.msg_id;
          }
        },
        a.frame);
    return d;
  }

  void on_arrival(const Event<Payload>& ev, const Arrival& a) {
    const bool received = linked(a.from, a.to);
    json detail = frame_detail(a);
    detail["received"] = received;
    log_event(ev, a.to, std::move(detail));

    NodeRuntime& sender = runtime(a.from);
    const bool frees_sender = sender.epoch == a.sender_epoch;
    if (frees_sender) sender.transmitting = false;

    if (!received) {
      if (std::holds_alternative<routing::ControlMessage>(a.frame)) {
        count_drop(drop::kStaleControl, a.to, {{"from", a.from.value}});
      } else {
        count_drop(drop::kLinkLoss, a.to, {{"from", a.from.value}, {"at", "receive"}});
      }
    } else {
      std::visit([&](const auto& f) { receive(a.from, a.to, f); }, a.frame);
    }
    if (frees_sender) try_start(a.from);
  }

  // --- routing control ---------------------------------------------------

  void receive(NodeId from, NodeId at, const routing::ControlMessage& msg) {
    NodeRuntime& rt = runtime(at);
    if (rt.leaving) return;
    switch (msg.kind()) {
      case routing::ControlKind::Advertisement: {
        auto u = rt.agent.on_advertisement(from, msg, queue_.now(), link_neighbors(at));
        arm_expiry(at, from, queue_.now() + expiry_budget());
        send_control(at, std::move(u.outbox));
        if (u.changed) release_waiting(at);
        break;
      }
      case routing::ControlKind::Withdraw: {
        auto u = rt.agent.on_neighbor_lost(from, queue_.now(), link_neighbors(at));
        send_control(at, std::move(u.outbox));
        break;
      }
      case routing::ControlKind::DiscoveryRequest:
        send_control(at, rt.agent.on_discovery(from, msg, link_neighbors(at)));
        break;
    }
  }

  // --- transport ---------------------------------------------------------

  transport::QueueDepthFn depth_fn(NodeId n) const {
    return [this, n](NodeId hop) {
      const auto& d = runtime(n).data_depth;
      auto it = d.find(hop);
      return it == d.end() ? std::size_t{0} : it->second;
    };
  }

  void on_traffic(const Event<Payload>& ev, const TrafficAction& t) {
    const TrafficSpec& spec = config_.traffic[t.index];
    const std::uint64_t msg_id = next_msg_id_++;
    log_event(ev, spec.src, {{"action", "send"}, {"msg_id", msg_id}});

    transport::PendingTransfer pt;
    pt.msg_id = msg_id;
    pt.src = spec.src;
    pt.dst = spec.dst;
    pt.plaintext = transport::make_plaintext(seed_, msg_id, spec.bytes);
    pt.sent_at = ev.time;
    pt.retries_left = config_.protocol.retries;

    ++metrics_.messages_sent;
    emit(record_kind::kMessageSent, spec.src,
         {{"msg_id", msg_id},
          {"src", spec.src.value},
          {"dst", spec.dst.value},
          {"bytes", spec.bytes},
          {"plaintext_hex", to_hex(pt.plaintext)}});

    if (!active(spec.src) || !world_.contains(spec.dst)) {
      resolve_failure(pt, failure::kRejected);
      return;
    }
    transport::BitString sealed(transport::seal_payload(pt.plaintext, pt.src, pt.dst, seed_));
    pt.fragments = transport::make_fragments(msg_id, pt.src, pt.dst, sealed, config_.rate_multiplier);
    pt.timer_deadline = ev.time + config_.protocol.t_ack;
    auto& stored = pending_.emplace(msg_id, std::move(pt)).first->second;
    schedule(stored.timer_deadline, EventKind::AckTimer, AckDeadline{msg_id, 0});
    if (!attempt_send(stored)) start_discovery(stored);
  }

  /// Queues every fragment on the chosen first hop. False when no route.
  bool attempt_send(transport::PendingTransfer& pt) {
    if (!active(pt.src)) return false;
    const auto& agent = runtime(pt.src).agent;
    auto hop = transport::choose_first_hop(agent, pt.dst, pt.routes_tried, depth_fn(pt.src));
    if (!hop) {
      pt.awaiting_route = true;
      return false;
    }
    pt.awaiting_route = false;
    pt.routes_tried.insert(*hop);
    for (const auto& frag : pt.fragments) enqueue(pt.src, *hop, Frame{frag});
    return true;
  }

  void start_discovery(transport::PendingTransfer& pt) {
    if (!active(pt.src)) return;
    ++metrics_.discoveries_triggered;
    emit(record_kind::kDiscovery, pt.src, {{"msg_id", pt.msg_id}, {"target", pt.dst.value}});
    send_control(pt.src, runtime(pt.src).agent.start_discovery(pt.dst, link_neighbors(pt.src)));
  }

  /// Transfers at `n` waiting for a route retry once the table changes.
  void release_waiting(NodeId n) {
    for (auto& [id, pt] : pending_) {
      if (pt.src == n && pt.awaiting_route && !pt.acked) attempt_send(pt);
    }
  }

  void on_ack_timer(const Event<Payload>& ev, const AckDeadline& d) {
    log_event(ev, std::nullopt, {{"msg_id", d.msg_id}});
    auto it = pending_.find(d.msg_id);
    if (it == pending_.end()) return;
    transport::PendingTransfer& pt = it->second;
    if (d.generation != static_cast<std::uint32_t>(pt.retries_used)) return;
    if (pt.retries_left > 0) {
      --pt.retries_left;
      ++pt.retries_used;
      pt.timer_deadline = ev.time + config_.protocol.t_ack;
      schedule(pt.timer_deadline, EventKind::AckTimer, AckDeadline{pt.msg_id, static_cast<std::uint32_t>(pt.retries_used)});
      start_discovery(pt);
      attempt_send(pt);
      return;
    }
    if (!resolved_.contains(pt.msg_id)) resolve_failure(pt, failure_class(pt.msg_id));
    pending_.erase(it);
  }

  const char* failure_class(std::uint64_t msg_id) const {
    auto it = last_drop_.find(msg_id);
    if (it == last_drop_.end()) return failure::kRetryExhausted;
    return it->second == transport::DropReason::TtlExhausted ? failure::kTtlDrop : failure::kForwardFailure;
  }

  void resolve_failure(const transport::PendingTransfer& pt, const char* outcome) {
    resolved_.insert(pt.msg_id);
    metrics_.failed[outcome]++;
    emit(record_kind::kMessageFailed, pt.src, {{"msg_id", pt.msg_id}, {"outcome", outcome}, {"retries", pt.retries_used}});
    deliveries_.push_back({pt.msg_id, pt.src, pt.dst, pt.plaintext.size(), outcome, std::nullopt, std::nullopt, pt.retries_used});
  }

  void receive(NodeId, NodeId at, const transport::DataPacket& in) {
    transport::DataPacket pkt = in;
    pkt.hop_trace.push_back(at);
    NodeRuntime& rt = runtime(at);
    auto dec = transport::forward_decision(rt.agent, pkt.dst, pkt.hop_trace.size(), depth_fn(at));
    switch (dec.kind) {
      case transport::ForwardDecision::Kind::Deliver:
        deliver(at, pkt);
        break;
      case transport::ForwardDecision::Kind::Forward:
        enqueue(at, dec.next_hop, Frame{std::move(pkt)});
        break;
      case transport::ForwardDecision::Kind::Drop:
        last_drop_[pkt.msg_id] = dec.reason;
        count_drop(dec.reason == transport::DropReason::TtlExhausted ? drop::kTtl : drop::kForwardFailure, at,
                   {{"msg_id", pkt.msg_id}, {"frame", "data"}});
        break;
    }
  }

  void deliver(NodeId at, const transport::DataPacket& pkt) {
    NodeRuntime& rt = runtime(at);
    auto res = rt.reassembler.add(pkt);
    using S = transport::Reassembler::Status;
    if (res.status == S::AlreadyDelivered) {
      if (pkt.fragment_index + 1 == pkt.fragment_count) send_ack(at, pkt);
      return;
    }
    if (res.status != S::Completed) return;

    transport::Bytes plain = transport::open_payload(res.sealed.to_bytes(), pkt.src, pkt.dst, seed_, at);
    auto pit = pending_.find(pkt.msg_id);
    if (!resolved_.contains(pkt.msg_id) && pit != pending_.end()) {
      const transport::PendingTransfer& pt = pit->second;
      if (opts_.audit && plain != pt.plaintext) violations_.push_back("payload corrupted for msg " + std::to_string(pkt.msg_id));
      resolved_.insert(pkt.msg_id);
      const int hops = static_cast<int>(pkt.hop_trace.size()) - 1;
      const SimTime latency = queue_.now() - pt.sent_at;
      ++metrics_.delivered;
      ++metrics_.hop_histogram[hops];
      ++metrics_.latency_histogram[latency.half_us()];
      json trace_ids = json::array();
      for (NodeId n : pkt.hop_trace) trace_ids.push_back(n.value);
      emit(record_kind::kMessageDelivered, at,
           {{"msg_id", pkt.msg_id},
            {"src", pkt.src.value},
            {"dst", pkt.dst.value},
            {"bytes", plain.size()},
            {"hops", hops},
            {"hop_trace", trace_ids},
            {"latency_us", json_us(latency)},
            {"retries", pt.retries_used},
            {"plaintext_hex", to_hex(plain)}});
      deliveries_.push_back({pkt.msg_id, pkt.src, pkt.dst, plain.size(), "delivered", hops, latency, pt.retries_used});
    }
    send_ack(at, pkt);
  }

  void send_ack(NodeId at, const transport::DataPacket& pkt) {
    transport::AckPacket ack{pkt.msg_id, at, pkt.src, {at}};
    route_ack(at, std::move(ack));
  }

  void route_ack(NodeId at, transport::AckPacket ack) {
    auto dec = transport::forward_decision(runtime(at).agent, ack.to, ack.hop_trace.size(), depth_fn(at));
    if (dec.kind == transport::ForwardDecision::Kind::Forward) {
      enqueue(at, dec.next_hop, Frame{std::move(ack)});
    } else if (dec.kind == transport::ForwardDecision::Kind::Drop) {
      count_drop(dec.reason == transport::DropReason::TtlExhausted ? drop::kTtl : drop::kForwardFailure, at,
                 {{"msg_id", ack.msg_id}, {"frame", "ack"}});
    }
  }

  void receive(NodeId, NodeId at, const transport::AckPacket& in) {
    transport::AckPacket ack = in;
    ack.hop_trace.push_back(at);
    if (at == ack.to) {
      pending_.erase(ack.msg_id);
      return;
    }
    route_ack(at, std::move(ack));
  }

  // --- end of run ----------------------------------------------------------

  /// Transfers still open at the horizon are resolved as failures unless
  /// the destination already has the message.
  void finalize() {
    for (auto& [id, pt] : pending_) {
      if (!resolved_.contains(id)) resolve_failure(pt, failure_class(id));
    }
    pending_.clear();
  }

  void audit() {
    if (world_.size() > kMaxNodes) violations_.push_back("node count exceeds 255");
    if (config_.link_mode == LinkMode::Scatternet) {
      for (auto& v : scatternet_.violations()) violations_.push_back("scatternet: " + v);
    }
    for (const auto& [id, rt] : nodes_) {
      const auto& t = rt.agent.table();
      for (const auto& [d, e] : t.entries()) {
        if (e.cost > t.infinity() || e.cost < 0) violations_.push_back("cost out of range at node " + to_string(id));
        if (d == id && e.cost != 0) violations_.push_back("self entry not zero at node " + to_string(id));
      }
    }
  }

  ScenarioConfig config_;
  std::uint64_t seed_;
  Options opts_;

  World world_;
  Scatternet scatternet_;
  Adjacency links_;
  std::map<NodeId, NodeRuntime> nodes_;
  std::map<std::uint32_t, SimTime> piconet_busy_;
  bool has_motion_ = false;
  std::size_t reformations_ = 0;

  EventQueue<Payload> queue_;
  SimTime last_event_time_;

  std::uint64_t next_msg_id_ = 1;
  std::map<std::uint64_t, transport::PendingTransfer> pending_;
  std::set<std::uint64_t> resolved_;
  std::map<std::uint64_t, transport::DropReason> last_drop_;

  Metrics metrics_;
  std::vector<TraceRecord> trace_;
  std::vector<DeliveryRecord> deliveries_;
  std::vector<std::string> violations_;
};

/// Runs a validated scenario to its horizon.
inline RunResult run_scenario(const ScenarioConfig& config, std::uint64_t seed, Options opts = {}) {
  Simulation s(config, seed, opts);
  return s.finish();
}

}  // namespace btrange::sim
