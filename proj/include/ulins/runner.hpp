#pragma once

// Batch runner: scenario -> simulate -> estimate -> metrics/artifacts, plus
// the suite driver that sweeps scenarios x variants x seeds and aggregates
// an RMS row per variant.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ulins/estimator.hpp"
#include "ulins/evaluation.hpp"
#include "ulins/io.hpp"
#include "ulins/scenarios.hpp"
#include "ulins/simulator.hpp"

namespace ulins {

struct RunConfig {
  Scenario scenario;
  Variant variant = Variant::kMrUlins;
  std::optional<std::uint64_t> seed;  // overrides scenario.seed when set
  int window_lidar = 20;
  int window_uwb = 20;
  std::vector<int> anchor_subset;  // empty: use every surveyed anchor
  EstimatorConfig tuning;          // variant/windows fields are overwritten
  std::filesystem::path out_dir;   // empty: no artifacts written
  std::string run_name;            // artifact subdirectory; derived if empty
  int traj_stride = 10;            // pose recorded every this many IMU ticks
  double divergence_threshold = 10.0;  // m against simulated truth
};

struct RunResult {
  bool ok = false;
  bool diverged = false;
  std::string message;
  MetricsReport metrics;
  TrajectoryEstimate trajectory;
  TimingProfile timing;
  std::vector<AnchorState> anchor_estimates;  // final scale/bias per anchor
  std::filesystem::path dir;  // artifact directory, empty if none
  double wall_seconds = 0.0;
};

inline std::string default_run_name(const RunConfig& cfg) {
  std::string name = cfg.scenario.name + "-" + variant_flag(cfg.variant) +
                     "-s" +
                     std::to_string(cfg.seed.value_or(cfg.scenario.seed));
  if (!cfg.anchor_subset.empty()) {
    name += "-a";
    for (int id : cfg.anchor_subset) name += std::to_string(id);
  }
  return name;
}

namespace detail {

inline nlohmann::json timing_json(const TimingProfile& t,
                                  double wall_seconds) {
  nlohmann::json stages = nlohmann::json::object();
  const auto add = [&stages](const char* label, const StageTimes& s) {
    if (s.invocations == 0) return;  // stage never ran: absent, not zero
    stages[label] = {{"mean_ms", s.mean_ms()},
                     {"invocations", s.invocations},
                     {"total_s", s.seconds}};
  };
  add("forward propagation", t.propagation);
  add("LiDAR update", t.lidar_update);
  add("outlier rejection", t.outlier_rejection);
  add("UWB update", t.uwb_update);
  return {{"schema", "ulins-timing-v1"},
          {"stages", stages},
          {"total_wall_s", wall_seconds}};
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
  return {{"schema", "ulins-run-config-v1"},
          {"scenario", cfg.scenario.name},
          {"variant", variant_flag(cfg.variant)},
          {"seed", cfg.seed.value_or(cfg.scenario.seed)},
          {"window_lidar", cfg.window_lidar},
          {"window_uwb", cfg.window_uwb},
          {"anchor_subset", cfg.anchor_subset},
          {"traj_stride", cfg.traj_stride},
          {"divergence_threshold_m", cfg.divergence_threshold}};
}

}  // namespace detail

inline RunResult run(const RunConfig& cfg) {
  RunResult res;
  const auto wall0 = std::chrono::steady_clock::now();

  Scenario sc = cfg.scenario;
  if (cfg.seed) sc.seed = *cfg.seed;
  const SimulatedData data = simulate(sc);

  // Surveyed anchor table, optionally restricted to a subset.
  std::vector<AnchorState> anchors;
  for (const AnchorTruth& a : sc.anchors) {
    if (!cfg.anchor_subset.empty() &&
        std::find(cfg.anchor_subset.begin(), cfg.anchor_subset.end(), a.id) ==
            cfg.anchor_subset.end()) {
      continue;
    }
    AnchorState s;
    s.id = a.id;
    s.position = a.position;
    anchors.push_back(s);
  }

  EstimatorConfig ecfg = cfg.tuning;
  ecfg.variant = cfg.variant;
  ecfg.lidar_window = cfg.window_lidar;
  ecfg.uwb_window = cfg.window_uwb;
  ecfg.imu_noise = sc.imu_noise;
  ecfg.tag.lever_arm = sc.uwb.tag_lever_arm;
  ecfg.uwb_noise_std = sc.uwb.noise_std;
  ecfg.rejection_seed = derive_seed(sc.seed, 9001);  // not a simulator stream

  NavState nav0;
  nav0.R = data.truth.samples.front().R;
  nav0.p = data.truth.samples.front().p;
  nav0.v = data.truth.samples.front().v;
  Estimator est(ecfg, anchors, nav0, sc.lidar.extrinsics,
                data.truth.samples.front().t);

  const auto cycles = group_ranging_cycles(data.uwb, ecfg.epoch_window);

  try {
    size_t li = 0, ui = 0;
    // Measurements stamped at the very start precede the first IMU sample.
    const double t0 = data.truth.samples.front().t;
    while (li < data.lidar.size() && data.lidar[li].timestamp <= t0 + 1e-9) {
      est.process_lidar(data.lidar[li++]);
    }
    while (ui < cycles.size() && cycles[ui].front().t <= t0 + 1e-9) {
      est.process_uwb(cycles[ui++]);
    }
    res.trajectory.push_back({t0, est.state().nav.R, est.state().nav.p});
    for (size_t i = 0; i < data.imu.size(); ++i) {
      est.process_imu(data.imu[i]);
      const double t = data.imu[i].t;
      // Measurements stamped at or before the propagated time, LiDAR first.
      while (li < data.lidar.size() &&
             data.lidar[li].timestamp <= t + 1e-9) {
        est.process_lidar(data.lidar[li++]);
      }
      while (ui < cycles.size() && cycles[ui].front().t <= t + 1e-9) {
        est.process_uwb(cycles[ui++]);
      }

      if ((i + 1) % cfg.traj_stride == 0) {
        res.trajectory.push_back(
            {t, est.state().nav.R, est.state().nav.p});
        if (i + 1 < data.truth.samples.size()) {
          const double err =
              (est.state().nav.p - data.truth.samples[i + 1].p).norm();
          if (err > cfg.divergence_threshold) {
            res.diverged = true;
            res.message = "diverged: " + g17(err) + " m at t=" + g17(t);
            break;
          }
        }
      }
    }
  } catch (const std::exception& e) {
    res.message = std::string("estimator error: ") + e.what();
  }

  res.timing = est.timing();
  res.anchor_estimates = est.state().anchors;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0)
          .count();

  if (!res.trajectory.empty()) {
    res.metrics = make_report(variant_label(cfg.variant), res.trajectory,
                              data.truth.samples);
  }
  res.ok = !res.diverged && res.message.empty() && !res.trajectory.empty();

  if (!cfg.out_dir.empty()) {
    const std::string name =
        cfg.run_name.empty() ? default_run_name(cfg) : cfg.run_name;
    res.dir = cfg.out_dir / name;
    std::filesystem::create_directories(res.dir);
    write_scenario_json(res.dir / "scenario.json", sc);
    atomic_write(res.dir / "run_config.json",
                 detail::run_config_json(cfg).dump(2) + "\n");
    write_tum(res.dir / "trajectory.tum", res.trajectory);
    if (!res.trajectory.empty()) {
      write_metrics_json(res.dir / "metrics.json", res.metrics);
    }
    write_diagnostics_csv(res.dir / "diagnostics.csv", est.diagnostics());
    nlohmann::json aj = {{"schema", "ulins-anchors-v1"},
                         {"anchors", nlohmann::json::array()}};
    for (const AnchorState& a : res.anchor_estimates) {
      aj["anchors"].push_back({{"id", a.id},
                               {"x", a.position.x()},
                               {"y", a.position.y()},
                               {"z", a.position.z()},
                               {"scale", a.scale},
                               {"bias", a.bias}});
    }
    atomic_write(res.dir / "anchors.json", aj.dump(2) + "\n");
    atomic_write(res.dir / "timing.json",
                 detail::timing_json(res.timing, res.wall_seconds).dump(2) +
                     "\n");
    nlohmann::json status = {{"schema", "ulins-status-v1"},
                             {"ok", res.ok},
                             {"diverged", res.diverged},
                             {"message", res.message}};
    atomic_write(res.dir / "status.json", status.dump(2) + "\n");
  }
  return res;
}

// ---- Suite driver ----

struct SuiteEntry {
  std::string scenario;
  Variant variant = Variant::kMrUlins;
  std::uint64_t seed = 0;
  RunResult result;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;
  // Variant -> RMS of per-run RMSEs over the suite's successful runs.
  std::map<Variant, double> rms_2d, rms_3d;
};

inline SuiteReport run_suite(const std::vector<RunConfig>& configs) {
  SuiteReport report;
  std::map<Variant, std::pair<double, int>> acc2, acc3;
  for (const RunConfig& cfg : configs) {
    SuiteEntry e;
    e.scenario = cfg.scenario.name;
    e.variant = cfg.variant;
    e.seed = cfg.seed.value_or(cfg.scenario.seed);
    e.result = run(cfg);
    if (e.result.ok) {
      acc2[e.variant].first += e.result.metrics.rmse_2d * e.result.metrics.rmse_2d;
      acc2[e.variant].second += 1;
      acc3[e.variant].first += e.result.metrics.rmse_3d * e.result.metrics.rmse_3d;
      acc3[e.variant].second += 1;
    }
    report.entries.push_back(std::move(e));
  }
  for (const auto& [v, a] : acc2) {
    report.rms_2d[v] = std::sqrt(a.first / a.second);
  }
  for (const auto& [v, a] : acc3) {
    report.rms_3d[v] = std::sqrt(a.first / a.second);
  }
  return report;
}

inline std::string suite_csv(const SuiteReport& report) {
  std::string out = "scenario,variant,seed,ok,rmse_2d_m,rmse_3d_m\n";
  for (const SuiteEntry& e : report.entries) {
    out += e.scenario + "," + variant_flag(e.variant) + "," +
           std::to_string(e.seed) + "," + (e.result.ok ? "1" : "0") + "," +
           g17(e.result.metrics.rmse_2d) + "," +
           g17(e.result.metrics.rmse_3d) + "\n";
  }
  for (const auto& [v, rms] : report.rms_3d) {
    out += "RMS," + std::string(variant_flag(v)) + ",,," +
           g17(report.rms_2d.at(v)) + "," + g17(rms) + "\n";
  }
  return out;
}

inline void write_suite_csv(const std::filesystem::path& path,
                            const SuiteReport& report) {
  atomic_write(path, suite_csv(report));
}

}  // namespace ulins
