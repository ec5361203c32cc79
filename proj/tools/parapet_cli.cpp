// parapet_cli.cpp -- command line front end: run scenario files, expand the
// built-in presets, and benchmark the flow table.
//
// Exit codes: 0 ok, 2 validation failure, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parapet/bench.hpp"
#include "parapet/engine.hpp"
#include "parapet/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace parapet;

namespace {

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

int run_point(const std::string& name, const nlohmann::json& doc, const fs::path& out_dir,
              bool decision_log, nlohmann::json* summary_out) {
  ScenarioConfig cfg = scenario_from_json(doc);
  Simulation sim(cfg);

  std::ofstream decisions;
  if (decision_log) {
    decisions.open(out_dir / (name + ".decisions.csv"));
    decisions << "t,flow,old_W,new_W,packetLoss,halved\n";
    sim.on_decision = [&decisions](Tick t, const DecisionOutcome& d) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%lld,%u,%.9g,%.9g,%.9g,%d\n", static_cast<long long>(t),
                    d.flow, d.old_window, d.new_window, d.packet_loss, d.halved ? 1 : 0);
      decisions << buf;
    };
  }

  RunResult res = sim.run();

  std::ofstream csv(out_dir / (name + ".csv"));
  if (!csv) throw std::runtime_error("cannot write CSV for " + name);
  write_timeseries_csv(res, csv);

  nlohmann::json summary = summarize_run(cfg, res);
  summary["name"] = name;
  write_file(out_dir / (name + ".summary.json"), summary.dump(2) + "\n");
  if (summary_out) *summary_out = summary;

  logging::info("%s: %lld ticks, legit %.3f ppt, attack %.3f ppt, conservation %s", name.c_str(),
                static_cast<long long>(cfg.duration), res.steady_goodput_per_tick(SenderClass::Legit),
                res.steady_goodput_per_tick(SenderClass::Attack),
                res.conservation_ok ? "ok" : "VIOLATED");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traffic-policing flow simulator"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  bool decision_log = false;
  auto* run_cmd = app.add_subcommand("run", "run one scenario file");
  run_cmd->add_option("--config", config_path, "scenario JSON")->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed", seed_override, "override the scenario seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  run_cmd->add_flag("--decision-log", decision_log, "emit per-decision CSV");

  // preset
  std::string preset_name;
  std::vector<std::string> overrides;
  auto* preset_cmd = app.add_subcommand("preset", "expand and run a built-in experiment");
  preset_cmd->add_option("name", preset_name, "preset name")->required();
  preset_cmd->add_option("--out", out_dir, "output directory");
  preset_cmd->add_option("--set", overrides, "override config values, e.g. policer.lambda=0.4");
  preset_cmd->add_option("--seed", seed_override, "override the scenario seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  preset_cmd->add_flag("--decision-log", decision_log, "emit per-decision CSV");

  // bench
  std::string sizes_arg = "1e6,1e7";
  auto* bench_cmd = app.add_subcommand("bench", "flow-table scalability benchmark");
  bench_cmd->add_option("--sizes", sizes_arg, "comma-separated table sizes (e.g. 1e6,1e7,1e8)");
  bench_cmd->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out_dir);

    if (*run_cmd) {
      std::ifstream in(config_path);
      if (!in) throw ScenarioError({"scenario: cannot open '" + config_path + "'"});
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw ScenarioError({std::string("scenario: JSON parse error: ") + e.what()});
      }
      if (seed_set) doc["seed"] = seed_override;
      return run_point(fs::path(config_path).stem().string(), doc, out_dir, decision_log, nullptr);
    }

    if (*preset_cmd) {
      auto points = expand_preset(preset_name);
      nlohmann::json sweep = nlohmann::json::array();
      for (auto& pt : points) {
        for (const auto& ov : overrides) apply_override(pt.config, ov);
        if (seed_set) pt.config["seed"] = seed_override;
        nlohmann::json summary;
        run_point(pt.name, pt.config, out_dir, decision_log, &summary);
        sweep.push_back(summary);
      }
      if (points.size() > 1)
        write_file(fs::path(out_dir) / (preset_name + ".sweep.json"), sweep.dump(2) + "\n");
      return 0;
    }

    if (*bench_cmd) {
      std::vector<std::size_t> sizes;
      std::stringstream ss(sizes_arg);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        double val = std::stod(tok);
        sizes.push_back(static_cast<std::size_t>(val));
      }
      nlohmann::json report = nlohmann::json::array();
      std::vector<BenchPoint> points;
      std::printf("%14s %12s %12s %10s %16s\n", "entries", "median_ns", "p99_ns", "payload_B",
                  "container_MB");
      for (std::size_t n : sizes) {
        std::string reason;
        if (!bench_memory_preflight(n, &reason)) {
          std::fprintf(stderr, "skipping %zu entries: %s\n", n, reason.c_str());
          continue;
        }
        BenchPoint pt = run_bench_point(n);
        points.push_back(pt);
        std::printf("%14zu %12.1f %12.1f %10zu %16.1f\n", pt.table_size, pt.median_ns, pt.p99_ns,
                    pt.bytes_per_entry_semantic, pt.container_bytes / 1048576.0);
        report.push_back({{"entries", pt.table_size},
                          {"ops", pt.ops},
                          {"median_ns", pt.median_ns},
                          {"p99_ns", pt.p99_ns},
                          {"bytes_per_entry_semantic", pt.bytes_per_entry_semantic},
                          {"container_bytes", pt.container_bytes}});
      }
      write_file(fs::path(out_dir) / "bench.json", report.dump(2) + "\n");
      if (points.size() >= 2) {
        double ratio = points.back().median_ns / points.front().median_ns;
        bool flat = ratio <= 2.0;
        std::printf("size independence (%zu -> %zu entries): median ratio %.2f -- %s\n",
                    points.front().table_size, points.back().table_size, ratio,
                    flat ? "OK" : "VIOLATED");
        if (!flat) return 3;
      }
      return 0;
    }
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
