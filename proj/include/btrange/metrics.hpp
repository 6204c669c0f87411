// Delivery, latency and control-overhead counters, the trace record schema
// they are derived from, and the JSON / CSV summaries.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "btrange/core.hpp"

namespace btrange {

using nlohmann::json;

/// Microsecond value for JSON: an integer when whole, otherwise x.5.
inline json json_us(SimTime t) {
  if (t.is_whole_us()) return t.us();
  return t.us_exact();
}

inline SimTime sim_time_from_json_us(const json& v) {
  if (v.is_number_integer()) return SimTime::from_us(v.get<std::int64_t>());
  return SimTime::from_half_us(static_cast<std::int64_t>(std::llround(v.get<double>() * 2.0)));
}

/// One line of the trace: {t_us, seq, kind, node, detail}.
struct TraceRecord {
  SimTime time;
  std::uint64_t seq = 0;
  std::string kind;
  std::optional<NodeId> node;
  json detail = json::object();

  json to_json() const {
    json j;
    j["t_us"] = json_us(time);
    j["seq"] = seq;
    j["kind"] = kind;
    j["node"] = node ? json(node->value) : json(nullptr);
    j["detail"] = detail;
    return j;
  }

  static TraceRecord from_json(const json& j) {
    TraceRecord r;
    r.time = sim_time_from_json_us(j.at("t_us"));
    r.seq = j.at("seq").get<std::uint64_t>();
    r.kind = j.at("kind").get<std::string>();
    if (!j.at("node").is_null()) r.node = NodeId(j.at("node").get<std::uint16_t>());
    r.detail = j.at("detail");
    return r;
  }
};

namespace record_kind {
inline constexpr const char* kMessageSent = "msg_send";
inline constexpr const char* kMessageDelivered = "msg_deliver";
inline constexpr const char* kMessageFailed = "msg_fail";
inline constexpr const char* kControlTx = "ctrl_tx";
inline constexpr const char* kDataTx = "data_tx";
inline constexpr const char* kDiscovery = "discovery";
inline constexpr const char* kDrop = "drop";
}  // namespace record_kind

/// Kernel event kinds as they appear in the trace.
inline const std::vector<std::string>& kernel_event_kinds() {
  static const std::vector<std::string> kinds = {"MotionUpdate",   "StateChange",   "AdvertisementTimer",
                                                 "AckTimer",       "NeighborExpiry", "PacketArrival",
                                                 "ScenarioAction"};
  return kinds;
}

namespace failure {
inline constexpr const char* kForwardFailure = "forward-failure";
inline constexpr const char* kTtlDrop = "ttl-drop";
inline constexpr const char* kRetryExhausted = "retry-exhausted";
inline constexpr const char* kRejected = "rejected";
}  // namespace failure

namespace drop {
inline constexpr const char* kLinkLoss = "link-loss";
inline constexpr const char* kStaleControl = "stale-control";
inline constexpr const char* kForwardFailure = "forward-failure";
inline constexpr const char* kTtl = "ttl";
}  // namespace drop

class SchemaError : public Error {
 public:
  using Error::Error;
};

struct Metrics {
  std::uint64_t messages_sent = 0;
  std::uint64_t delivered = 0;
  std::map<std::string, std::uint64_t> failed{{failure::kForwardFailure, 0},
                                              {failure::kTtlDrop, 0},
                                              {failure::kRetryExhausted, 0},
                                              {failure::kRejected, 0}};
  std::map<int, std::uint64_t> hop_histogram;
  /// Keyed by latency in half-microseconds.
  std::map<std::int64_t, std::uint64_t> latency_histogram;
  std::map<std::string, std::uint64_t> control_packets{{"advertisement", 0}, {"withdraw", 0}, {"discovery", 0}};
  std::uint64_t data_packets_forwarded = 0;
  std::uint64_t discoveries_triggered = 0;
  std::map<std::string, std::uint64_t> drops{
      {drop::kLinkLoss, 0}, {drop::kStaleControl, 0}, {drop::kForwardFailure, 0}, {drop::kTtl, 0}};
  std::map<std::string, std::uint64_t> events;

  std::uint64_t failed_total() const {
    std::uint64_t s = 0;
    for (const auto& [_, v] : failed) s += v;
    return s;
  }

  std::uint64_t control_total() const {
    std::uint64_t s = 0;
    for (const auto& [_, v] : control_packets) s += v;
    return s;
  }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Folds one trace record into `m`. Every known kind touches exactly one
/// counter family; unknown kinds are rejected.
inline void record_event(Metrics& m, const TraceRecord& r) {
  using namespace record_kind;
  const json& d = r.detail;
  if (r.kind == kMessageSent) {
    ++m.messages_sent;
  } else if (r.kind == kMessageDelivered) {
    ++m.delivered;
    ++m.hop_histogram[d.at("hops").get<int>()];
    ++m.latency_histogram[sim_time_from_json_us(d.at("latency_us")).half_us()];
  } else if (r.kind == kMessageFailed) {
    auto it = m.failed.find(d.at("outcome").get<std::string>());
    if (it == m.failed.end()) throw SchemaError("unknown failure class " + d.at("outcome").dump());
    ++it->second;
  } else if (r.kind == kControlTx) {
    auto it = m.control_packets.find(d.at("control").get<std::string>());
    if (it == m.control_packets.end()) throw SchemaError("unknown control kind " + d.at("control").dump());
    ++it->second;
  } else if (r.kind == kDataTx) {
    ++m.data_packets_forwarded;
  } else if (r.kind == kDiscovery) {
    ++m.discoveries_triggered;
  } else if (r.kind == kDrop) {
    auto it = m.drops.find(d.at("reason").get<std::string>());
    if (it == m.drops.end()) throw SchemaError("unknown drop reason " + d.at("reason").dump());
    ++it->second;
  } else if (std::find(kernel_event_kinds().begin(), kernel_event_kinds().end(), r.kind) !=
             kernel_event_kinds().end()) {
    ++m.events[r.kind];
  } else {
    throw SchemaError("unknown trace record kind '" + r.kind + "'");
  }
}

/// Recomputes metrics from NDJSON trace text.
inline Metrics replay_trace(std::istream& ndjson) {
  Metrics m;
  std::string line;
  while (std::getline(ndjson, line)) {
    if (line.empty()) continue;
    record_event(m, TraceRecord::from_json(json::parse(line)));
  }
  return m;
}

/// Nearest-rank percentile over a histogram of half-microsecond values.
inline std::optional<std::int64_t> percentile(const std::map<std::int64_t, std::uint64_t>& hist, double p) {
  std::uint64_t n = 0;
  for (const auto& [_, c] : hist) n += c;
  if (n == 0) return std::nullopt;
  auto rank = static_cast<std::uint64_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::uint64_t>(rank, 1, n);
  std::uint64_t seen = 0;
  for (const auto& [v, c] : hist) {
    seen += c;
    if (seen >= rank) return v;
  }
  return hist.rbegin()->first;
}

inline json summarize(const Metrics& m) {
  json r;
  r["messages_sent"] = m.messages_sent;
  r["delivered"] = m.delivered;
  r["failed"] = m.failed;
  r["delivery_ratio"] = m.messages_sent == 0 ? json(nullptr)
                                              : json(static_cast<double>(m.delivered) /
                                                     static_cast<double>(m.messages_sent));

  std::uint64_t n = 0, sum = 0;
  for (const auto& [h, c] : m.hop_histogram) {
    n += c;
    sum += static_cast<std::uint64_t>(h) * c;
  }
  json hops;
  hops["mean"] = n == 0 ? json(nullptr) : json(static_cast<double>(sum) / static_cast<double>(n));
  hops["max"] = n == 0 ? json(nullptr) : json(m.hop_histogram.rbegin()->first);
  hops["histogram"] = json::object();
  for (const auto& [h, c] : m.hop_histogram) hops["histogram"][std::to_string(h)] = c;
  r["hops"] = hops;

  json lat;
  for (auto [name, p] : {std::pair{"p50", 50.0}, std::pair{"p95", 95.0}, std::pair{"max", 100.0}}) {
    auto v = percentile(m.latency_histogram, p);
    lat[name] = v ? json_us(SimTime::from_half_us(*v)) : json(nullptr);
  }
  r["latency_us"] = lat;

  json ctrl = m.control_packets;
  ctrl["total"] = m.control_total();
  r["control_packets"] = ctrl;
  r["data_packets_forwarded"] = m.data_packets_forwarded;
  r["discoveries_triggered"] = m.discoveries_triggered;
  r["control_overhead_ratio"] =
      static_cast<double>(m.control_total()) / static_cast<double>(std::max<std::uint64_t>(1, m.data_packets_forwarded));
  r["drops"] = m.drops;
  return r;
}

/// One row of deliveries.csv.
struct DeliveryRecord {
  std::uint64_t msg_id = 0;
  NodeId src;
  NodeId dst;
  std::size_t bytes = 0;
  std::string outcome;
  std::optional<int> hops;
  std::optional<SimTime> latency;
  int retries = 0;
};

inline constexpr const char* kDeliveriesCsvHeader = "msg_id,src,dst,bytes,outcome,hops,latency_us,retries";

inline std::string deliveries_csv(const std::vector<DeliveryRecord>& rows) {
  std::ostringstream os;
  os << kDeliveriesCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.msg_id << ',' << r.src.value << ',' << r.dst.value << ',' << r.bytes << ',' << r.outcome << ',';
    if (r.hops) os << *r.hops;
    os << ',';
    if (r.latency) os << json_us(*r.latency).dump();
    os << ',' << r.retries << '\n';
  }
  return os.str();
}

}  // namespace btrange
