// Steps a scenario one advertisement period at a time and prints how many
// destinations each node can reach, so convergence is visible round by round.
#include <iostream>

#include "btrange/scenario.hpp"
#include "btrange/simulation.hpp"

using namespace btrange;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: convergence_watch <scenario.json> [seed]\n";
    return 1;
  }
  auto parsed = parse_scenario(argv[1]);
  if (!parsed.ok()) {
    for (const auto& d : parsed.diagnostics) std::cerr << d.str() << "\n";
    return 1;
  }
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 0;
  sim::Simulation s(*parsed.config, seed);
  const auto step = parsed.config->protocol.t_adv;
  for (SimTime t{}; t <= parsed.config->horizon; t = t + step) {
    s.run_until(t);
    std::cout << "t=" << t.us() / 1000 << "ms";
    for (const auto& n : s.world().nodes()) {
      int reachable = 0;
      for (const auto& [dest, e] : s.agent(n.id).table().entries()) {
        if (dest != n.id && e.cost < parsed.config->protocol.infinity) ++reachable;
      }
      std::cout << " " << n.id.value << ":" << reachable;
    }
    std::cout << "\n";
  }
}
