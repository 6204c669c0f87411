// Shared vocabulary: node identifiers, simulation time, error types and
// seed derivation.
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace btrange {

/// Identifier of a simulated device. Valid identifiers are 0..254.
struct NodeId {
  std::uint16_t value = 0;

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint16_t v) : value(v) {}

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

inline constexpr std::uint16_t kMaxNodeIdValue = 254;
inline constexpr std::size_t kMaxNodes = 255;

using NodeSet = std::set<NodeId>;

inline std::string to_string(NodeId id) { return std::to_string(id.value); }

/// Simulation time in half-microsecond units. One baseband tick (312.5 us)
/// is exactly 625 units, so every baseband duration is an integer.
class SimTime {
 public:
  constexpr SimTime() = default;

  static constexpr SimTime from_half_us(std::int64_t h) { return SimTime(h); }
  static constexpr SimTime from_us(std::int64_t us) { return SimTime(us * 2); }
  static constexpr SimTime from_ms(std::int64_t ms) { return SimTime(ms * 2000); }
  static constexpr SimTime from_s(std::int64_t s) { return SimTime(s * 2'000'000); }

  constexpr std::int64_t half_us() const { return half_us_; }
  /// Whole microseconds, truncated. Use is_whole_us() when exactness matters.
  constexpr std::int64_t us() const { return half_us_ / 2; }
  constexpr bool is_whole_us() const { return half_us_ % 2 == 0; }
  constexpr double us_exact() const { return static_cast<double>(half_us_) / 2.0; }
  constexpr double seconds() const { return static_cast<double>(half_us_) / 2e6; }

  friend constexpr auto operator<=>(SimTime, SimTime) = default;
  friend constexpr SimTime operator+(SimTime a, SimTime b) { return SimTime(a.half_us_ + b.half_us_); }
  friend constexpr SimTime operator-(SimTime a, SimTime b) { return SimTime(a.half_us_ - b.half_us_); }
  friend constexpr SimTime operator*(SimTime a, std::int64_t k) { return SimTime(a.half_us_ * k); }
  constexpr SimTime& operator+=(SimTime o) {
    half_us_ += o.half_us_;
    return *this;
  }

 private:
  constexpr explicit SimTime(std::int64_t h) : half_us_(h) {}
  std::int64_t half_us_ = 0;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown node identifier.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Structural limit exceeded (255 nodes, slot capacity, ...).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Event scheduled in the past.
class CausalityError : public Error {
 public:
  using Error::Error;
};

/// A relay tried to open a sealed payload.
class OpacityViolation : public Error {
 public:
  using Error::Error;
};

// splitmix64 finalizer; the only mixing primitive used for derived randomness.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives the seed for one named consumer (e.g. "seal", "hop/3") from the
/// scenario seed. Distinct names give independent streams.
constexpr std::uint64_t derive_seed(std::uint64_t scenario_seed, std::string_view consumer) {
  return mix64(mix64(scenario_seed) ^ fnv1a(consumer));
}

}  // namespace btrange

template <>
struct std::hash<btrange::NodeId> {
  std::size_t operator()(btrange::NodeId id) const noexcept { return id.value; }
};
