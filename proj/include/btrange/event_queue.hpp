// Time-ordered event queue with a monotonically increasing sequence number
// as tie-breaker, so (time, sequence) totally orders all events.
#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <string_view>
#include <vector>

#include "btrange/core.hpp"

namespace btrange::sim {

enum class EventKind {
  MotionUpdate,
  StateChange,
  AdvertisementTimer,
  AckTimer,
  NeighborExpiry,
  PacketArrival,
  ScenarioAction,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::MotionUpdate: return "MotionUpdate";
    case EventKind::StateChange: return "StateChange";
    case EventKind::AdvertisementTimer: return "AdvertisementTimer";
    case EventKind::AckTimer: return "AckTimer";
    case EventKind::NeighborExpiry: return "NeighborExpiry";
    case EventKind::PacketArrival: return "PacketArrival";
    case EventKind::ScenarioAction: return "ScenarioAction";
  }
  return "?";
}

template <typename Payload>
struct Event {
  SimTime time;
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::ScenarioAction;
  Payload payload{};
};

template <typename Payload>
class EventQueue {
 public:
  using value_type = Event<Payload>;

  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  /// Inserts an event; throws CausalityError for a time before now().
  std::uint64_t schedule(SimTime at, EventKind kind, Payload payload) {
    if (at < now_) throw CausalityError("event scheduled in the past");
    std::uint64_t seq = next_seq_++;
    heap_.push(value_type{at, seq, kind, std::move(payload)});
    return seq;
  }

  const value_type& top() const { return heap_.top(); }

  /// Removes the earliest event and advances now() to its time.
  value_type pop() {
    value_type e = heap_.top();
    heap_.pop();
    now_ = e.time;
    return e;
  }

  /// Pops the earliest event if it is due at or before `horizon`.
  std::optional<value_type> pop_until(SimTime horizon) {
    if (heap_.empty() || heap_.top().time > horizon) return std::nullopt;
    return pop();
  }

  /// Moves the clock forward to `t` once nothing earlier is pending.
  void advance_to(SimTime t) {
    if (!heap_.empty() && heap_.top().time < t) throw CausalityError("advance past a pending event");
    if (now_ < t) now_ = t;
  }

 private:
  struct Later {
    bool operator()(const value_type& a, const value_type& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.sequence > b.sequence;
    }
  };

  std::priority_queue<value_type, std::vector<value_type>, Later> heap_;
  SimTime now_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace btrange::sim
