// Batch CLI: simulate scenarios to sensor files, run estimator variants,
// sweep suites, and summarize finished runs.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulins/io.hpp"
#include "ulins/runner.hpp"
#include "ulins/scenarios.hpp"

namespace {

using namespace ulins;

struct ScenarioArgs {
  std::string path;
  std::string preset = "los";
  std::optional<std::uint64_t> seed;
};

void add_scenario_flags(CLI::App* cmd, ScenarioArgs& args) {
  cmd->add_option("--scenario", args.path,
                  "Scenario JSON file (ulins-scenario-v1)");
  cmd->add_option("--preset", args.preset,
                  std::string("Built-in scenario: ") + preset_names());
  cmd->add_option("--seed", args.seed, "Override the scenario seed");
}

Scenario resolve_scenario(const ScenarioArgs& args) {
  Scenario sc;
  if (!args.path.empty()) {
    sc = read_scenario_json(args.path);
  } else {
    auto preset = preset_scenario(args.preset, args.seed.value_or(1));
    if (!preset) {
      throw CLI::ValidationError("--preset", "unknown preset '" +
                                                 args.preset + "' (have: " +
                                                 preset_names() + ")");
    }
    sc = *preset;
  }
  if (args.seed) sc.seed = *args.seed;
  return sc;
}

Variant resolve_variant(const std::string& name) {
  const auto v = parse_variant(name);
  if (!v) {
    throw CLI::ValidationError(
        "--variant", "unknown variant '" + name +
                         "' (tc-lio, uins, ulins, ulins-oe, ulins-mor, "
                         "mr-ulins)");
  }
  return *v;
}

std::vector<int> parse_anchor_list(const std::string& csv) {
  std::vector<int> ids;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) ids.push_back(std::stoi(tok));
  return ids;
}

void print_run(const RunResult& res) {
  if (!res.ok) {
    std::printf("run FAILED: %s\n",
                res.message.empty() ? "no output" : res.message.c_str());
  }
  if (res.trajectory.empty()) return;
  const MetricsReport& m = res.metrics;
  std::printf("%-10s rmse_2d %.4f m  rmse_3d %.4f m  max %.4f m  (%d poses)\n",
              m.label.c_str(), m.rmse_2d, m.rmse_3d, m.max_error, m.samples);
  const auto stage = [](const char* label, const StageTimes& s) {
    if (s.invocations == 0) return;  // never invoked: stay silent
    std::printf("  %-20s %8.3f ms mean  x%ld\n", label, s.mean_ms(),
                s.invocations);
  };
  stage("forward propagation", res.timing.propagation);
  stage("LiDAR update", res.timing.lidar_update);
  stage("outlier rejection", res.timing.outlier_rejection);
  stage("UWB update", res.timing.uwb_update);
  std::printf("  wall time %.2f s\n", res.wall_seconds);
}

int cmd_simulate(const ScenarioArgs& sargs, const std::string& out) {
  const Scenario sc = resolve_scenario(sargs);
  const SimulatedData data = simulate(sc);
  std::filesystem::create_directories(out);
  const std::filesystem::path dir(out);

  write_scenario_json(dir / "scenario.json", sc);
  write_imu_csv(dir / "imu.csv", data.imu);
  write_ranges_csv(dir / "ranges.csv", data.uwb);
  write_clouds(dir / "clouds.ulpc", data.lidar);
  std::vector<AnchorState> anchors;
  for (const AnchorTruth& a : sc.anchors) {
    AnchorState s;
    s.id = a.id;
    s.position = a.position;
    anchors.push_back(s);
  }
  write_anchors_csv(dir / "anchors.csv", anchors);
  TrajectoryEstimate truth;
  for (const GroundTruthSample& s : data.truth.samples) {
    truth.push_back({s.t, s.R, s.p});
  }
  write_tum(dir / "truth.tum", truth);

  std::printf("scenario '%s': %zu imu, %zu clouds, %zu ranges -> %s\n",
              sc.name.c_str(), data.imu.size(), data.lidar.size(),
              data.uwb.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UWB-LiDAR-inertial estimator workbench"};
  app.require_subcommand(1);

  // simulate
  ScenarioArgs sim_args;
  std::string sim_out;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Generate sensor streams and ground truth for a scenario");
  add_scenario_flags(sim, sim_args);
  sim->add_option("--out", sim_out, "Output directory")->required();

  // run
  ScenarioArgs run_args;
  RunConfig run_cfg;
  std::string run_variant = "mr-ulins", run_out, run_anchors;
  CLI::App* runc =
      app.add_subcommand("run", "Run one estimator variant on a scenario");
  add_scenario_flags(runc, run_args);
  runc->add_option("--variant", run_variant,
                   "tc-lio | uins | ulins | ulins-oe | ulins-mor | mr-ulins");
  runc->add_option("--out", run_out, "Artifact directory");
  runc->add_option("--window-lidar", run_cfg.window_lidar,
                   "LiDAR keyframe window size N");
  runc->add_option("--window-uwb", run_cfg.window_uwb,
                   "UWB epoch window size M");
  runc->add_option("--anchors", run_anchors,
                   "Comma-separated anchor ids to use (e.g. 1,3)");

  // suite
  std::vector<std::string> suite_paths, suite_presets, suite_variants;
  std::vector<std::uint64_t> suite_seeds;
  std::string suite_out;
  CLI::App* suite = app.add_subcommand(
      "suite", "Sweep scenarios x variants x seeds and tabulate RMSEs");
  suite->add_option("--scenario", suite_paths, "Scenario JSON file(s)");
  suite->add_option("--preset", suite_presets, "Built-in scenario name(s)");
  suite->add_option("--variant", suite_variants, "Variant(s) to run");
  suite->add_option("--seed", suite_seeds, "Seed(s), default scenario seed");
  suite->add_option("--out", suite_out, "Artifact directory")->required();

  // report
  std::vector<std::string> report_dirs;
  CLI::App* report = app.add_subcommand(
      "report", "Summarize metrics from finished run directories");
  report->add_option("--run", report_dirs, "Run directory(ies)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_args, sim_out);

    if (runc->parsed()) {
      run_cfg.scenario = resolve_scenario(run_args);
      run_cfg.variant = resolve_variant(run_variant);
      run_cfg.out_dir = run_out;
      if (!run_anchors.empty()) {
        std::stringstream ss(run_anchors);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          run_cfg.anchor_subset.push_back(std::stoi(tok));
        }
      }
      const RunResult res = run(run_cfg);
      print_run(res);
      return res.ok ? 0 : 1;
    }

    if (suite->parsed()) {
      std::vector<Scenario> scenarios;
      for (const std::string& p : suite_paths) {
        scenarios.push_back(read_scenario_json(p));
      }
      for (const std::string& p : suite_presets) {
        ScenarioArgs a;
        a.path.clear();
        a.preset = p;
        scenarios.push_back(resolve_scenario(a));
      }
      if (scenarios.empty()) scenarios.push_back(make_los_scenario());
      if (suite_variants.empty()) suite_variants = {"mr-ulins"};

      std::vector<RunConfig> configs;
      for (const Scenario& sc : scenarios) {
        for (const std::string& vname : suite_variants) {
          const Variant v = resolve_variant(vname);
          if (suite_seeds.empty()) {
            RunConfig c;
            c.scenario = sc;
            c.variant = v;
            c.out_dir = suite_out;
            configs.push_back(c);
          }
          for (std::uint64_t s : suite_seeds) {
            RunConfig c;
            c.scenario = sc;
            c.variant = v;
            c.seed = s;
            c.out_dir = suite_out;
            configs.push_back(c);
          }
        }
      }

      const SuiteReport rep = run_suite(configs);
      std::filesystem::create_directories(suite_out);
      write_suite_csv(std::filesystem::path(suite_out) / "suite.csv", rep);
      std::printf("%-12s %-10s %-6s %-4s %-10s %-10s\n", "scenario",
                  "variant", "seed", "ok", "rmse_2d", "rmse_3d");
      for (const SuiteEntry& e : rep.entries) {
        std::printf("%-12s %-10s %-6llu %-4s %-10.4f %-10.4f\n",
                    e.scenario.c_str(), variant_flag(e.variant),
                    static_cast<unsigned long long>(e.seed),
                    e.result.ok ? "yes" : "NO", e.result.metrics.rmse_2d,
                    e.result.metrics.rmse_3d);
      }
      for (const auto& [v, rms] : rep.rms_3d) {
        std::printf("%-12s %-10s %-6s %-4s %-10.4f %-10.4f\n", "RMS",
                    variant_flag(v), "", "", rep.rms_2d.at(v), rms);
      }
      bool all_ok = true;
      for (const SuiteEntry& e : rep.entries) all_ok = all_ok && e.result.ok;
      return all_ok ? 0 : 1;
    }

    if (report->parsed()) {
      std::printf("%-12s %-10s %-10s %-10s %-8s\n", "run", "label",
                  "rmse_2d", "rmse_3d", "samples");
      for (const std::string& d : report_dirs) {
        const MetricsReport m =
            read_metrics_json(std::filesystem::path(d) / "metrics.json");
        std::printf("%-12s %-10s %-10.4f %-10.4f %-8d\n",
                    std::filesystem::path(d).filename().string().c_str(),
                    m.label.c_str(), m.rmse_2d, m.rmse_3d, m.samples);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
