// Command-line front end: run / tables / topo.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "btrange/scenario.hpp"
#include "btrange/simulation.hpp"

namespace btrange::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

struct SeedRange {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

/// "A..B" inclusive.
inline std::optional<SeedRange> parse_seed_range(const std::string& s) {
  static const std::regex re(R"(^\s*(\d+)\s*\.\.\s*(\d+)\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return std::nullopt;
  SeedRange r{std::stoull(m[1]), std::stoull(m[2])};
  if (r.last < r.first) return std::nullopt;
  return r;
}

/// Accepts "250ms", "2.5s", "1500us" or a bare number of milliseconds.
inline std::optional<SimTime> parse_time(const std::string& s) {
  static const std::regex re(R"(^\s*(\d+(?:\.\d+)?)\s*(us|ms|s)?\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return std::nullopt;
  const double v = std::stod(m[1]);
  const std::string unit = m[2].matched ? m[2].str() : "ms";
  const double half_us = unit == "us" ? v * 2 : unit == "ms" ? v * 2e3 : v * 2e6;
  return SimTime::from_half_us(static_cast<std::int64_t>(std::llround(half_us)));
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << content;
  if (!f) throw Error("write failed for " + p.string());
}

/// Writes report.json, trace.ndjson and deliveries.csv into `dir`.
inline void write_run_outputs(const sim::RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", r.report().dump(2) + "\n");
  write_file(dir / "trace.ndjson", r.trace_ndjson());
  write_file(dir / "deliveries.csv", deliveries_csv(r.deliveries));
}

inline json topology_json(const ScenarioConfig& cfg, std::uint64_t seed) {
  sim::Simulation s(cfg, seed);
  json j;
  j["link_mode"] = to_string(cfg.link_mode);
  j["nodes"] = json::array();
  for (const Node& n : s.world().nodes()) {
    j["nodes"].push_back({{"id", n.id.value},
                          {"x", n.position.x},
                          {"y", n.position.y},
                          {"range_m", n.radio.range_m},
                          {"state", to_string(n.state)}});
  }
  j["adjacency"] = json::object();
  for (const auto& [id, nbrs] : s.links()) {
    json arr = json::array();
    for (NodeId m : nbrs) arr.push_back(m.value);
    j["adjacency"][to_string(id)] = arr;
  }
  if (cfg.link_mode == LinkMode::Scatternet) j["scatternet"] = s.scatternet().to_json();
  return j;
}

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(std::vector<std::string> args) {
    CLI::App app{"Bluetooth multi-hop range extension simulator", "btrange"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::uint64_t seed = 0;
    std::string seeds;
    std::string out_dir;
    std::string at;
    unsigned jobs = 0;

    auto* run_cmd = app.add_subcommand("run", "Run a scenario and write report, trace and deliveries");
    run_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    auto* seed_opt = run_cmd->add_option("--seed", seed, "Scenario seed");
    run_cmd->add_option("--seeds", seeds, "Inclusive seed range A..B; one output subdirectory per seed")
        ->excludes(seed_opt);
    run_cmd->add_option("--out", out_dir, "Output directory")->required();
    run_cmd->add_option("-j,--jobs", jobs, "Parallel runs for --seeds (default: hardware threads)");

    auto* tables_cmd = app.add_subcommand("tables", "Dump every routing table at a simulated time");
    tables_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    tables_cmd->add_option("--seed", seed, "Scenario seed");
    tables_cmd->add_option("--at", at, "Simulated time, e.g. 2500ms, 2.5s, 1500us")->required();

    auto* topo_cmd = app.add_subcommand("topo", "Dump the initial adjacency and scatternet");
    topo_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    topo_cmd->add_option("--seed", seed, "Scenario seed");

    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return kOk;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return kOk;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kValidation;
    }

    auto parsed = parse_scenario(scenario_path);
    if (!parsed.ok()) {
      for (const auto& d : parsed.diagnostics) err_ << scenario_path << ": " << d.str() << "\n";
      return kValidation;
    }
    const ScenarioConfig& cfg = *parsed.config;

    try {
      if (*run_cmd) return do_run(cfg, seed, seeds, out_dir, jobs);
      if (*tables_cmd) {
        auto t = parse_time(at);
        if (!t) {
          err_ << "error: --at: cannot parse time '" << at << "'\n";
          return kValidation;
        }
        sim::Simulation s(cfg, seed);
        s.run_until(*t);
        out_ << s.tables_json().dump(2) << "\n";
        return kOk;
      }
      out_ << topology_json(cfg, seed).dump(2) << "\n";
      return kOk;
    } catch (const sim::ConfigError& e) {
      err_ << e.what() << "\n";
      return kValidation;
    } catch (const std::exception& e) {
      err_ << "runtime error: " << e.what() << "\n";
      return kRuntime;
    }
  }

 private:
  int do_run(const ScenarioConfig& cfg, std::uint64_t seed, const std::string& seeds, const std::string& out_dir,
             unsigned jobs) {
    if (seeds.empty()) {
      auto r = sim::run_scenario(cfg, seed);
      write_run_outputs(r, out_dir);
      out_ << r.report().dump(2) << "\n";
      return kOk;
    }
    auto range = parse_seed_range(seeds);
    if (!range) {
      err_ << "error: --seeds expects A..B with A <= B, got '" << seeds << "'\n";
      return kValidation;
    }
    std::vector<std::uint64_t> all;
    for (std::uint64_t s = range->first;; ++s) {
      all.push_back(s);
      if (s == range->last) break;
    }
    if (jobs == 0) jobs = std::max(1U, std::thread::hardware_concurrency());

    json summary = json::object();
    for (std::size_t i = 0; i < all.size(); i += jobs) {
      std::vector<std::future<json>> batch;
      for (std::size_t k = i; k < std::min(all.size(), i + jobs); ++k) {
        const std::uint64_t s = all[k];
        batch.push_back(std::async(std::launch::async, [&cfg, s, &out_dir] {
          auto r = sim::run_scenario(cfg, s);
          write_run_outputs(r, std::filesystem::path(out_dir) / ("seed-" + std::to_string(s)));
          return r.report();
        }));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) summary[std::to_string(all[i + k])] = batch[k].get();
    }
    write_file(std::filesystem::path(out_dir) / "sweep.json", summary.dump(2) + "\n");
    out_ << summary.dump(2) << "\n";
    return kOk;
  }

  std::ostream& out_;
  std::ostream& err_;
};

/// Entry point over argv-style arguments (without the program name).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Cli(out, err).run(args);
}

}  // namespace btrange::cli
