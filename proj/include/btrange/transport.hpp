// End-to-end delivery pieces: the sealed payload, bit-granular
// fragmentation into slot-class packets, reassembly with duplicate
// suppression, and the forwarding / retry decisions.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "btrange/baseband.hpp"
#include "btrange/core.hpp"
#include "btrange/routing.hpp"

namespace btrange::transport {

using Bytes = std::vector<std::uint8_t>;

/// A bit sequence stored MSB-first in whole bytes. Fragment boundaries fall
/// on slot capacities (multiples of 625 bits), not on byte boundaries.
class BitString {
 public:
  BitString() = default;
  explicit BitString(Bytes bytes) : bytes_(std::move(bytes)), bits_(bytes_.size() * 8) {}

  std::size_t bit_length() const { return bits_; }
  const Bytes& bytes() const { return bytes_; }

  bool bit(std::size_t i) const { return (bytes_[i / 8] >> (7 - i % 8)) & 1U; }

  void push_bit(bool b) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (b) bytes_.back() |= static_cast<std::uint8_t>(1U << (7 - bits_ % 8));
    ++bits_;
  }

  void append(const BitString& o) {
    if (bits_ % 8 == 0) {
      bytes_.insert(bytes_.end(), o.bytes_.begin(), o.bytes_.end());
      bits_ += o.bits_;
      return;
    }
    for (std::size_t i = 0; i < o.bits_; ++i) push_bit(o.bit(i));
  }

  BitString slice(std::size_t offset, std::size_t len) const {
    if (offset + len > bits_) throw Error("bit slice out of range");
    BitString out;
    out.bytes_.reserve((len + 7) / 8);
    for (std::size_t i = 0; i < len; ++i) out.push_bit(bit(offset + i));
    return out;
  }

  /// Whole bytes; only valid when the length is a multiple of 8.
  Bytes to_bytes() const {
    if (bits_ % 8 != 0) throw Error("bit string not byte aligned");
    return bytes_;
  }

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  Bytes bytes_;
  std::size_t bits_ = 0;
};

inline std::uint64_t seal_key(std::uint64_t scenario_seed, NodeId src, NodeId dst) {
  return mix64(derive_seed(scenario_seed, "seal") ^ (std::uint64_t{src.value} << 8) ^ std::uint64_t{dst.value});
}

/// Keystream byte i is byte (i mod 8), little-endian, of mix64(key + i/8).
inline std::uint8_t keystream_byte(std::uint64_t key, std::size_t i) {
  return static_cast<std::uint8_t>(mix64(key + i / 8) >> (8 * (i % 8)));
}

/// Stand-in for end-to-end encryption: XOR with a keystream bound to
/// (scenario seed, src, dst). Length preserving and self-inverse.
inline Bytes seal_payload(const Bytes& plaintext, NodeId src, NodeId dst, std::uint64_t scenario_seed) {
  const std::uint64_t key = seal_key(scenario_seed, src, dst);
  Bytes out(plaintext.size());
  for (std::size_t i = 0; i < plaintext.size(); ++i) out[i] = plaintext[i] ^ keystream_byte(key, i);
  return out;
}

/// Inverse of seal_payload. Only the destination may call it: `at` names the
/// node attempting to open, and anything other than `dst` is an opacity
/// violation.
inline Bytes open_payload(const Bytes& sealed, NodeId src, NodeId dst, std::uint64_t scenario_seed, NodeId at) {
  if (at != dst) {
    throw OpacityViolation("node " + to_string(at) + " attempted to open a payload addressed to " + to_string(dst));
  }
  return seal_payload(sealed, src, dst, scenario_seed);
}

/// Deterministic application payload for a message.
inline Bytes make_plaintext(std::uint64_t scenario_seed, std::uint64_t msg_id, std::size_t bytes) {
  const std::uint64_t key = derive_seed(scenario_seed, "payload/" + std::to_string(msg_id));
  Bytes out(bytes);
  for (std::size_t i = 0; i < bytes; ++i) out[i] = keystream_byte(key, i);
  return out;
}

struct DataPacket {
  std::uint64_t msg_id = 0;
  NodeId src;
  NodeId dst;
  std::uint32_t fragment_index = 0;
  std::uint32_t fragment_count = 1;
  BitString sealed_payload;
  baseband::SlotClass slot_class = baseband::SlotClass::one();
  /// Observability only: every node the packet has reached, starting at src.
  std::vector<NodeId> hop_trace;
};

/// End-to-end acknowledgment, routed back from dst to src like data.
struct AckPacket {
  std::uint64_t msg_id = 0;
  NodeId from;  // the data destination
  NodeId to;    // the data source
  std::vector<NodeId> hop_trace;
};

inline constexpr std::int64_t kAckBits = 64;

/// Splits a sealed payload into pieces of at most the 5-slot capacity and
/// sizes each piece's slot class. An empty payload yields one empty packet.
inline std::vector<DataPacket> make_fragments(std::uint64_t msg_id, NodeId src, NodeId dst, const BitString& sealed,
                                              int rate_multiplier = 1) {
  const std::size_t max_bits = static_cast<std::size_t>(baseband::kMaxPayloadBits) * rate_multiplier;
  const std::size_t total = sealed.bit_length();
  const std::size_t count = total == 0 ? 1 : (total + max_bits - 1) / max_bits;
  std::vector<DataPacket> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t off = i * max_bits;
    std::size_t len = std::min(max_bits, total - off);
    DataPacket p;
    p.msg_id = msg_id;
    p.src = src;
    p.dst = dst;
    p.fragment_index = static_cast<std::uint32_t>(i);
    p.fragment_count = static_cast<std::uint32_t>(count);
    p.sealed_payload = sealed.slice(off, len);
    p.slot_class = baseband::slots_for_payload(static_cast<std::int64_t>(len), rate_multiplier);
    p.hop_trace = {src};
    out.push_back(std::move(p));
  }
  return out;
}

/// Per-destination reassembly keyed by (msg_id, fragment_index).
class Reassembler {
 public:
  enum class Status { Stored, Duplicate, Completed, AlreadyDelivered };

  struct Result {
    Status status;
    BitString sealed;  // set when Completed
  };

  Result add(const DataPacket& p) {
    if (delivered_.contains(p.msg_id)) return {Status::AlreadyDelivered, {}};
    auto& slot = pending_[p.msg_id];
    if (!slot.emplace(p.fragment_index, p.sealed_payload).second) return {Status::Duplicate, {}};
    if (slot.size() < p.fragment_count) return {Status::Stored, {}};
    BitString whole;
    for (const auto& [idx, piece] : slot) whole.append(piece);
    pending_.erase(p.msg_id);
    delivered_.insert(p.msg_id);
    return {Status::Completed, std::move(whole)};
  }

  bool delivered(std::uint64_t msg_id) const { return delivered_.contains(msg_id); }

 private:
  std::map<std::uint64_t, std::map<std::uint32_t, BitString>> pending_;
  std::set<std::uint64_t> delivered_;
};

struct PendingTransfer {
  std::uint64_t msg_id = 0;
  NodeId src;
  NodeId dst;
  Bytes plaintext;
  std::vector<DataPacket> fragments;
  SimTime sent_at;
  SimTime timer_deadline;
  int retries_left = 3;
  int retries_used = 0;
  std::set<NodeId> routes_tried;
  bool acked = false;
  bool awaiting_route = false;
};

enum class DropReason { ForwardFailure, TtlExhausted };

struct ForwardDecision {
  enum class Kind { Deliver, Forward, Drop };
  Kind kind;
  NodeId next_hop;
  DropReason reason = DropReason::ForwardFailure;
};

using QueueDepthFn = std::function<std::size_t(NodeId)>;

/// Decision at node `at` for a packet bound to `dst` whose trace already
/// includes `at`. Equal-cost next hops are load balanced by queue depth.
inline ForwardDecision forward_decision(const routing::RoutingAgent& agent, NodeId dst, std::size_t hop_trace_len,
                                        const QueueDepthFn& queue_depth) {
  if (dst == agent.self()) return {ForwardDecision::Kind::Deliver, dst};
  if (hop_trace_len > static_cast<std::size_t>(agent.infinity())) {
    return {ForwardDecision::Kind::Drop, {}, DropReason::TtlExhausted};
  }
  auto hop = routing::next_hop(agent.table(), dst);
  if (!hop.usable()) return {ForwardDecision::Kind::Drop, {}, DropReason::ForwardFailure};
  std::vector<routing::Candidate> cands;
  for (NodeId n : agent.equal_cost_hops(dst)) cands.push_back({n, queue_depth(n)});
  if (cands.empty()) cands.push_back({hop.hop, queue_depth(hop.hop)});
  return {ForwardDecision::Kind::Forward, *routing::select_next_hop(cands)};
}

/// First hop for a (re)transmission from the source: the cheapest route
/// whose first hop has not been tried yet, load balanced among equals;
/// if every option was tried, the best available one.
inline std::optional<NodeId> choose_first_hop(const routing::RoutingAgent& agent, NodeId dst,
                                              const std::set<NodeId>& routes_tried, const QueueDepthFn& queue_depth) {
  auto options = agent.route_options(dst);
  if (options.empty()) return std::nullopt;
  auto pick = [&](bool skip_tried) -> std::optional<NodeId> {
    std::optional<int> best_cost;
    std::vector<routing::Candidate> cands;
    for (auto [n, c] : options) {
      if (skip_tried && routes_tried.contains(n)) continue;
      if (!best_cost) best_cost = c;
      if (c != *best_cost) break;
      cands.push_back({n, queue_depth(n)});
    }
    return routing::select_next_hop(cands);
  };
  if (auto fresh = pick(true)) return fresh;
  return pick(false);
}

}  // namespace btrange::transport
