// Builds a line of Class 3 devices in code and sends one message end to end,
// once with every device present and once with the middle one switched off.
#include <iostream>

#include "btrange/simulation.hpp"

using namespace btrange;

namespace {

ScenarioConfig chain(int n) {
  ScenarioConfig c;
  for (int i = 0; i < n; ++i) {
    NodeSpec s;
    s.id = NodeId(static_cast<std::uint16_t>(i));
    s.position = {8.0 * i, 0.0};
    c.nodes.push_back(s);
  }
  c.traffic.push_back({SimTime::from_ms(3000), NodeId(0), NodeId(static_cast<std::uint16_t>(n - 1)), 600});
  c.horizon = SimTime::from_s(6);
  return c;
}

void show(const char* label, const sim::RunResult& r) {
  auto rep = r.report();
  std::cout << label << ": delivery_ratio=" << rep["delivery_ratio"] << " mean_hops=" << rep["hops"]["mean"]
            << " control=" << rep["control_packets"]["total"] << " data=" << rep["data_packets_forwarded"] << "\n";
  for (const auto& d : r.deliveries) {
    std::cout << "  msg " << d.msg_id << " " << d.outcome << " retries=" << d.retries << "\n";
  }
}

}  // namespace

int main() {
  auto full = chain(6);
  show("all relays up", sim::run_scenario(full, 1));

  auto broken = full;
  broken.nodes[3].initial_state = NodeState::Off;
  show("relay 3 off", sim::run_scenario(broken, 1));
}
