// Slot and clock arithmetic, packet slot classes, slot-parity ownership and
// the seeded hop-channel sequence.
#pragma once

#include <cstdint>

#include "btrange/core.hpp"
#include "btrange/scatternet.hpp"

namespace btrange::baseband {

inline constexpr SimTime kTick = SimTime::from_half_us(625);  // 312.5 us
inline constexpr SimTime kSlot = kTick * 2;                    // 625 us
inline constexpr SimTime kSlotPair = kSlot * 2;                // 1250 us
inline constexpr int kBitsPerSlot = 625;
inline constexpr int kChannelCount = 79;
inline constexpr int kHopsPerSecond = 1600;
inline constexpr int kMaxSlots = 5;
inline constexpr int kMaxPayloadBits = kBitsPerSlot * kMaxSlots;

static_assert(kSlot * kHopsPerSecond == SimTime::from_s(1));

class NotSchedulable : public Error {
 public:
  using Error::Error;
};

/// Master clock: a tick counter at 312.5 us.
struct Clock {
  std::uint64_t ticks = 0;

  constexpr std::uint64_t slot_index() const { return ticks / 2; }
  constexpr SimTime time() const { return kTick * static_cast<std::int64_t>(ticks); }
  static constexpr Clock at(SimTime t) { return Clock{static_cast<std::uint64_t>(t.half_us() / kTick.half_us())}; }
};

/// Packet length in slots: 1, 3 or 5.
class SlotClass {
 public:
  static constexpr SlotClass one() { return SlotClass(1); }
  static constexpr SlotClass three() { return SlotClass(3); }
  static constexpr SlotClass five() { return SlotClass(5); }

  constexpr int slots() const { return slots_; }
  /// Linear capacity; `rate_multiplier` scales the per-slot bit budget.
  constexpr int capacity_bits(int rate_multiplier = 1) const { return slots_ * kBitsPerSlot * rate_multiplier; }

  friend constexpr bool operator==(SlotClass, SlotClass) = default;

 private:
  constexpr explicit SlotClass(int s) : slots_(s) {}
  int slots_;
};

/// Smallest slot class that carries `payload_bits`. Throws CapacityError
/// above the 5-slot capacity; the caller must fragment.
inline SlotClass slots_for_payload(std::int64_t payload_bits, int rate_multiplier = 1) {
  if (payload_bits < 0) throw Error("negative payload size");
  for (SlotClass sc : {SlotClass::one(), SlotClass::three(), SlotClass::five()}) {
    if (payload_bits <= sc.capacity_bits(rate_multiplier)) return sc;
  }
  throw CapacityError("payload of " + std::to_string(payload_bits) + " bits exceeds 5-slot capacity");
}

constexpr SimTime tx_duration(SlotClass sc) { return kSlot * sc.slots(); }

struct HopSequence {
  std::uint64_t seed = 0;
};

/// Channel for a slot: a seeded integer mix of (seed, slot_index) reduced
/// to [0, 79). Not the standard hop-selection kernel.
constexpr int hop_channel(const HopSequence& seq, std::uint64_t slot_index) {
  return static_cast<int>(mix64(seq.seed ^ mix64(slot_index)) % kChannelCount);
}

enum class SlotAccess { MayTransmit, MustReceive };

/// Masters start transmissions in even slots, active slaves in odd ones.
inline SlotAccess slot_owner(std::uint64_t slot_index, RoleKind role) {
  switch (role) {
    case RoleKind::Master: return slot_index % 2 == 0 ? SlotAccess::MayTransmit : SlotAccess::MustReceive;
    case RoleKind::ActiveSlave: return slot_index % 2 == 1 ? SlotAccess::MayTransmit : SlotAccess::MustReceive;
    case RoleKind::ParkedSlave: break;
  }
  throw NotSchedulable("parked slave owns no slots");
}

/// Earliest slot index >= `first` in which `role` may start a packet.
inline std::uint64_t next_owned_slot(std::uint64_t first, RoleKind role) {
  return slot_owner(first, role) == SlotAccess::MayTransmit ? first : first + 1;
}

/// First slot boundary at or after `t`.
constexpr std::uint64_t slot_at_or_after(SimTime t) {
  auto s = static_cast<std::uint64_t>(t.half_us() / kSlot.half_us());
  return (t.half_us() % kSlot.half_us() == 0) ? s : s + 1;
}

constexpr SimTime slot_start(std::uint64_t slot_index) { return kSlot * static_cast<std::int64_t>(slot_index); }

}  // namespace btrange::baseband
