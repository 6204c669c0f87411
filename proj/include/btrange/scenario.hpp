// Declarative experiment description and its JSON loader. Loading is total:
// a file yields either a fully validated config or every diagnostic found.
#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "btrange/core.hpp"
#include "btrange/routing.hpp"
#include "btrange/scatternet.hpp"
#include "btrange/topology.hpp"

namespace btrange {

struct ProtocolParams {
  SimTime t_adv = SimTime::from_s(1);
  SimTime t_ack = SimTime::from_ms(100);
  int retries = 3;
  int infinity = routing::kDefaultInfinity;
  SimTime motion_cadence = SimTime::from_ms(100);
  /// Missed-advertisement budget before a neighbor is presumed gone.
  int expiry_periods = 3;
};

struct NodeSpec {
  NodeId id;
  Position position;
  DeviceClass device_class = DeviceClass::Class3;
  std::optional<double> range_m;
  NodeState initial_state = NodeState::Active;
  std::vector<Waypoint> waypoints;
};

struct TrafficSpec {
  SimTime time;
  NodeId src;
  NodeId dst;
  std::size_t bytes = 0;
};

struct ActionSpec {
  enum class Kind { SetState, Withdraw };
  SimTime time;
  NodeId node;
  Kind kind = Kind::SetState;
  NodeState state = NodeState::Active;
};

struct ScenarioConfig {
  std::vector<NodeSpec> nodes;
  LinkMode link_mode = LinkMode::Geometric;
  ProtocolParams protocol;
  std::vector<TrafficSpec> traffic;
  std::vector<ActionSpec> actions;
  SimTime horizon = SimTime::from_s(10);
  int rate_multiplier = 1;
};

struct Diagnostic {
  std::string path;
  std::string message;

  std::string str() const { return path.empty() ? message : path + ": " + message; }
};

/// Semantic checks on an already-typed config.
inline std::vector<Diagnostic> validate(const ScenarioConfig& c) {
  std::vector<Diagnostic> out;
  auto bad = [&](std::string path, std::string msg) { out.push_back({std::move(path), std::move(msg)}); };
  auto check_time = [&](const std::string& path, SimTime t) {
    if (t < SimTime{} || t > c.horizon) bad(path, "time outside [0, horizon]");
  };

  if (c.horizon < SimTime{}) bad("horizon_ms", "must be non-negative");
  if (c.rate_multiplier < 1 || c.rate_multiplier > 3) bad("rate_multiplier", "must be 1, 2 or 3");
  const auto& p = c.protocol;
  if (p.t_adv <= SimTime{}) bad("protocol.t_adv_ms", "must be positive");
  if (p.t_ack <= SimTime{}) bad("protocol.t_ack_ms", "must be positive");
  if (p.retries < 0) bad("protocol.retries", "must be non-negative");
  if (p.infinity < 2 || p.infinity > 255) bad("protocol.infinity", "must lie in [2, 255]");
  if (p.motion_cadence <= SimTime{}) bad("protocol.motion_cadence_ms", "must be positive");
  if (p.expiry_periods < 1) bad("protocol.expiry_periods", "must be at least 1");

  if (c.nodes.size() > kMaxNodes) {
    bad("nodes", std::to_string(c.nodes.size()) + " nodes exceeds the 255-node limit");
  }
  std::set<NodeId> ids;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const auto& n = c.nodes[i];
    std::string path = "nodes[" + std::to_string(i) + "]";
    if (n.id.value > kMaxNodeIdValue) bad(path + ".id", "must lie in [0, 254]");
    if (!ids.insert(n.id).second) bad(path + ".id", "duplicate node id " + to_string(n.id));
    if (!std::isfinite(n.position.x) || !std::isfinite(n.position.y)) bad(path, "coordinates must be finite");
    if (n.range_m) {
      auto [lo, hi] = RadioClass::range_band(n.device_class);
      if (!(*n.range_m >= lo && *n.range_m <= hi)) {
        bad(path + ".range_m", "outside the class band [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      }
    }
    for (std::size_t w = 0; w < n.waypoints.size(); ++w) {
      std::string wp = path + ".waypoints[" + std::to_string(w) + "]";
      check_time(wp + ".t_ms", n.waypoints[w].time);
      if (w > 0 && !(n.waypoints[w - 1].time < n.waypoints[w].time)) bad(wp + ".t_ms", "waypoint times must strictly increase");
      if (!std::isfinite(n.waypoints[w].position.x) || !std::isfinite(n.waypoints[w].position.y)) {
        bad(wp, "coordinates must be finite");
      }
    }
  }
  for (std::size_t i = 0; i < c.traffic.size(); ++i) {
    const auto& t = c.traffic[i];
    std::string path = "traffic[" + std::to_string(i) + "]";
    check_time(path + ".t_ms", t.time);
    if (!ids.contains(t.src)) bad(path + ".src", "references unknown node " + to_string(t.src));
    if (!ids.contains(t.dst)) bad(path + ".dst", "references unknown node " + to_string(t.dst));
    if (t.src == t.dst) bad(path, "src and dst must differ");
  }
  for (std::size_t i = 0; i < c.actions.size(); ++i) {
    const auto& a = c.actions[i];
    std::string path = "actions[" + std::to_string(i) + "]";
    check_time(path + ".t_ms", a.time);
    if (!ids.contains(a.node)) bad(path + ".node", "references unknown node " + to_string(a.node));
  }
  return out;
}

namespace detail {

class JsonReader {
 public:
  explicit JsonReader(std::vector<Diagnostic>& diags) : diags_(diags) {}

  void error(const std::string& path, const std::string& msg) { diags_.push_back({path, msg}); }

  bool expect_object(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      error(path, "expected an object");
      return false;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j.items()) {
      if (!ok.contains(k)) error(join(path, k), "unknown field");
    }
    return true;
  }

  const nlohmann::json* field(const nlohmann::json& j, const std::string& path, const char* key, bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
      if (required) error(join(path, key), "required field missing");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const nlohmann::json& j, const std::string& path, const char* key, bool required) {
    const auto* v = field(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      error(join(path, key), "expected a number");
      return std::nullopt;
    }
    double d = v->get<double>();
    if (!std::isfinite(d)) {
      error(join(path, key), "must be finite");
      return std::nullopt;
    }
    return d;
  }

  std::optional<std::int64_t> integer(const nlohmann::json& j, const std::string& path, const char* key,
                                      bool required) {
    const auto* v = field(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) {
      error(join(path, key), "expected an integer");
      return std::nullopt;
    }
    return v->get<std::int64_t>();
  }

  std::optional<std::string> string(const nlohmann::json& j, const std::string& path, const char* key, bool required) {
    const auto* v = field(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      error(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  /// Milliseconds to SimTime; must be a whole number of microseconds.
  std::optional<SimTime> millis(const nlohmann::json& j, const std::string& path, const char* key, bool required) {
    auto d = number(j, path, key, required);
    if (!d) return std::nullopt;
    double us = *d * 1000.0;
    double rounded = std::round(us);
    if (std::fabs(us - rounded) > 1e-6) {
      error(join(path, key), "must be a whole number of microseconds");
      return std::nullopt;
    }
    if (rounded < 0) {
      error(join(path, key), "must be non-negative");
      return std::nullopt;
    }
    return SimTime::from_us(static_cast<std::int64_t>(rounded));
  }

  std::optional<NodeId> node_id(const nlohmann::json& j, const std::string& path, const char* key) {
    auto v = integer(j, path, key, true);
    if (!v) return std::nullopt;
    if (*v < 0 || *v > kMaxNodeIdValue) {
      error(join(path, key), "node id must lie in [0, 254]");
      return std::nullopt;
    }
    return NodeId(static_cast<std::uint16_t>(*v));
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::vector<Diagnostic>& diags_;
};

}  // namespace detail

struct ParseResult {
  std::optional<ScenarioConfig> config;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return config.has_value(); }
};

inline ParseResult parse_scenario_json(const nlohmann::json& root) {
  ParseResult res;
  detail::JsonReader rd(res.diagnostics);
  ScenarioConfig c;
  if (!rd.expect_object(root, "", {"horizon_ms", "link_mode", "rate_multiplier", "protocol", "nodes", "traffic", "actions"})) {
    return res;
  }
  if (auto h = rd.millis(root, "", "horizon_ms", true)) c.horizon = *h;
  if (auto m = rd.string(root, "", "link_mode", false)) {
    if (*m == "geometric") c.link_mode = LinkMode::Geometric;
    else if (*m == "scatternet") c.link_mode = LinkMode::Scatternet;
    else rd.error("link_mode", "expected \"geometric\" or \"scatternet\"");
  }
  if (auto r = rd.integer(root, "", "rate_multiplier", false)) c.rate_multiplier = static_cast<int>(*r);

  if (const auto* p = rd.field(root, "", "protocol", false)) {
    if (rd.expect_object(*p, "protocol",
                         {"t_adv_ms", "t_ack_ms", "retries", "infinity", "motion_cadence_ms", "expiry_periods"})) {
      if (auto v = rd.millis(*p, "protocol", "t_adv_ms", false)) c.protocol.t_adv = *v;
      if (auto v = rd.millis(*p, "protocol", "t_ack_ms", false)) c.protocol.t_ack = *v;
      if (auto v = rd.integer(*p, "protocol", "retries", false)) c.protocol.retries = static_cast<int>(*v);
      if (auto v = rd.integer(*p, "protocol", "infinity", false)) c.protocol.infinity = static_cast<int>(*v);
      if (auto v = rd.millis(*p, "protocol", "motion_cadence_ms", false)) c.protocol.motion_cadence = *v;
      if (auto v = rd.integer(*p, "protocol", "expiry_periods", false)) c.protocol.expiry_periods = static_cast<int>(*v);
    }
  }

  bool structural_ok = true;
  auto array_field = [&](const char* key, bool required) -> const nlohmann::json* {
    const auto* a = rd.field(root, "", key, required);
    if (!a) return nullptr;
    if (!a->is_array()) {
      rd.error(key, "expected an array");
      structural_ok = false;
      return nullptr;
    }
    return a;
  };

  if (const auto* nodes = array_field("nodes", true)) {
    for (std::size_t i = 0; i < nodes->size(); ++i) {
      const auto& jn = (*nodes)[i];
      std::string path = "nodes[" + std::to_string(i) + "]";
      if (!rd.expect_object(jn, path, {"id", "x", "y", "class", "range_m", "state", "waypoints"})) {
        structural_ok = false;
        continue;
      }
      NodeSpec n;
      auto id = rd.node_id(jn, path, "id");
      auto x = rd.number(jn, path, "x", true);
      auto y = rd.number(jn, path, "y", true);
      auto cls = rd.integer(jn, path, "class", true);
      if (!id || !x || !y || !cls) structural_ok = false;
      if (id) n.id = *id;
      n.position = {x.value_or(0), y.value_or(0)};
      if (cls) {
        if (*cls < 1 || *cls > 3) {
          rd.error(path + ".class", "must be 1, 2 or 3");
          structural_ok = false;
        } else {
          n.device_class = static_cast<DeviceClass>(*cls);
        }
      }
      n.range_m = rd.number(jn, path, "range_m", false);
      if (auto s = rd.string(jn, path, "state", false)) {
        if (auto st = parse_node_state(*s)) n.initial_state = *st;
        else rd.error(path + ".state", "unknown state \"" + *s + "\"");
      }
      if (const auto* wps = rd.field(jn, path, "waypoints", false)) {
        if (!wps->is_array()) {
          rd.error(path + ".waypoints", "expected an array");
        } else {
          for (std::size_t w = 0; w < wps->size(); ++w) {
            std::string wpath = path + ".waypoints[" + std::to_string(w) + "]";
            const auto& jw = (*wps)[w];
            if (!rd.expect_object(jw, wpath, {"t_ms", "x", "y"})) continue;
            auto t = rd.millis(jw, wpath, "t_ms", true);
            auto wx = rd.number(jw, wpath, "x", true);
            auto wy = rd.number(jw, wpath, "y", true);
            if (t && wx && wy) n.waypoints.push_back({*t, {*wx, *wy}});
          }
        }
      }
      c.nodes.push_back(std::move(n));
    }
  }

  if (const auto* traffic = array_field("traffic", false)) {
    for (std::size_t i = 0; i < traffic->size(); ++i) {
      const auto& jt = (*traffic)[i];
      std::string path = "traffic[" + std::to_string(i) + "]";
      if (!rd.expect_object(jt, path, {"t_ms", "src", "dst", "bytes"})) continue;
      auto t = rd.millis(jt, path, "t_ms", true);
      auto src = rd.node_id(jt, path, "src");
      auto dst = rd.node_id(jt, path, "dst");
      auto bytes = rd.integer(jt, path, "bytes", true);
      if (bytes && *bytes < 0) {
        rd.error(path + ".bytes", "must be non-negative");
        bytes.reset();
      }
      if (t && src && dst && bytes) c.traffic.push_back({*t, *src, *dst, static_cast<std::size_t>(*bytes)});
    }
  }

  if (const auto* actions = array_field("actions", false)) {
    for (std::size_t i = 0; i < actions->size(); ++i) {
      const auto& ja = (*actions)[i];
      std::string path = "actions[" + std::to_string(i) + "]";
      if (!rd.expect_object(ja, path, {"t_ms", "node", "set_state", "withdraw"})) continue;
      auto t = rd.millis(ja, path, "t_ms", true);
      auto node = rd.node_id(ja, path, "node");
      bool has_state = ja.contains("set_state");
      bool has_withdraw = ja.contains("withdraw");
      if (has_state == has_withdraw) {
        rd.error(path, "exactly one of set_state or withdraw is required");
        continue;
      }
      ActionSpec a;
      if (has_state) {
        auto s = rd.string(ja, path, "set_state", true);
        auto st = s ? parse_node_state(*s) : std::nullopt;
        if (!st) {
          if (s) rd.error(path + ".set_state", "unknown state \"" + *s + "\"");
          continue;
        }
        a.kind = ActionSpec::Kind::SetState;
        a.state = *st;
      } else {
        if (!ja["withdraw"].is_boolean() || !ja["withdraw"].get<bool>()) {
          rd.error(path + ".withdraw", "must be true");
          continue;
        }
        a.kind = ActionSpec::Kind::Withdraw;
      }
      if (t && node) {
        a.time = *t;
        a.node = *node;
        c.actions.push_back(a);
      }
    }
  }

  if (structural_ok) {
    auto sem = validate(c);
    res.diagnostics.insert(res.diagnostics.end(), sem.begin(), sem.end());
  }
  if (res.diagnostics.empty()) res.config = std::move(c);
  return res;
}

inline ParseResult parse_scenario_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    ParseResult r;
    r.diagnostics.push_back({"", std::string("malformed JSON: ") + e.what()});
    return r;
  }
  return parse_scenario_json(root);
}

inline ParseResult parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult r;
    r.diagnostics.push_back({"", "cannot open scenario file " + path});
    return r;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

}  // namespace btrange
