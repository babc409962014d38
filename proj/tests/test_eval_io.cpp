#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "ulins/io.hpp"
#include "ulins/random.hpp"
#include "ulins/scenarios.hpp"

using namespace ulins;

namespace {

// Truth sampled on a straight line so interpolation is exact.
std::vector<GroundTruthSample> line_truth(int n, const Vec3& v) {
  std::vector<GroundTruthSample> truth(n);
  for (int i = 0; i < n; ++i) {
    truth[i].t = i * 0.1;
    truth[i].p = v * truth[i].t;
    truth[i].v = v;
  }
  return truth;
}

TrajectoryEstimate offset_estimate(
    const std::vector<GroundTruthSample>& truth, const Vec3& offset) {
  TrajectoryEstimate est;
  for (const GroundTruthSample& s : truth) {
    est.push_back({s.t, s.R, s.p + offset});
  }
  return est;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ulins_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("rmse of a perfect estimate is zero") {
  const auto truth = line_truth(50, Vec3(1, 0.5, 0));
  const auto est = offset_estimate(truth, Vec3::Zero());
  REQUIRE(rmse_3d(est, truth) == 0.0);
  REQUIRE(rmse_2d(est, truth) == 0.0);
}

TEST_CASE("rmse of mixed errors matches the hand value") {
  // Two samples with errors 0.3 and 0.4: rmse = sqrt((0.09 + 0.16) / 2).
  const auto truth = line_truth(2, Vec3(1, 0, 0));
  TrajectoryEstimate est;
  est.push_back({truth[0].t, Mat3::Identity(), truth[0].p + Vec3(0.3, 0, 0)});
  est.push_back({truth[1].t, Mat3::Identity(), truth[1].p + Vec3(0, 0.4, 0)});
  REQUIRE(rmse_3d(est, truth) == Catch::Approx(0.35355339059327373).epsilon(1e-12));
}

TEST_CASE("constant offset reproduces itself and splits 2d from 3d") {
  const auto truth = line_truth(40, Vec3(0.7, -0.2, 0.1));
  const auto flat = offset_estimate(truth, Vec3(0.06, 0.08, 0));
  REQUIRE(rmse_3d(flat, truth) == Catch::Approx(0.1).epsilon(1e-12));
  REQUIRE(rmse_2d(flat, truth) == Catch::Approx(0.1).epsilon(1e-12));
  const auto tall = offset_estimate(truth, Vec3(0, 0, 0.25));
  REQUIRE(rmse_2d(tall, truth) == 0.0);
  REQUIRE(rmse_3d(tall, truth) == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("error cdf counts at-or-below each level") {
  const auto truth = line_truth(4, Vec3(1, 0, 0));
  TrajectoryEstimate est;
  const double errs[4] = {0.05, 0.15, 0.25, 0.35};
  for (int i = 0; i < 4; ++i) {
    est.push_back({truth[i].t, Mat3::Identity(),
                   truth[i].p + Vec3(errs[i], 0, 0)});
  }
  const auto cdf = error_cdf(est, truth, {0.1, 0.2, 0.3, 0.4});
  REQUIRE(cdf == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  // A level exactly at an error value includes it.
  REQUIRE(error_cdf(est, truth, {0.15}) == std::vector<double>{0.5});
}

TEST_CASE("truth interpolation is linear in p and geodesic in R") {
  std::vector<GroundTruthSample> truth(2);
  truth[0].t = 0;
  truth[0].p = Vec3(1, 2, 3);
  truth[0].v = Vec3(1, 0, 0);
  truth[1].t = 2;
  truth[1].p = Vec3(3, 2, 1);
  truth[1].v = Vec3(0, 1, 0);
  truth[1].R = exp_so3(Vec3(0, 0, 1.0));
  const GroundTruthSample mid = interpolate_truth(truth, 1.0);
  REQUIRE((mid.p - Vec3(2, 2, 2)).norm() < 1e-12);
  REQUIRE((mid.v - Vec3(0.5, 0.5, 0)).norm() < 1e-12);
  REQUIRE(boxminus(mid.R, exp_so3(Vec3(0, 0, 0.5))).norm() < 1e-12);
  REQUIRE_THROWS(interpolate_truth(truth, 2.5));
}

TEST_CASE("report cdf is monotone and reaches one") {
  const auto truth = line_truth(30, Vec3(1, 0, 0));
  Rng rng(3);
  TrajectoryEstimate est;
  for (const GroundTruthSample& s : truth) {
    est.push_back({s.t, s.R,
                   s.p + Vec3(rng.gaussian(0, 0.3), rng.gaussian(0, 0.3),
                              rng.gaussian(0, 0.1))});
  }
  const MetricsReport r = make_report("test", est, truth);
  REQUIRE(r.samples == 30);
  REQUIRE(r.cdf_values.back() == 1.0);  // last level covers max_error
  for (size_t i = 1; i < r.cdf_values.size(); ++i) {
    REQUIRE(r.cdf_values[i] >= r.cdf_values[i - 1]);
  }
  REQUIRE(r.max_error >= r.mean_error);
  REQUIRE(r.rmse_3d >= r.rmse_2d);
}

TEST_CASE("g17 text round-trips doubles bit-exactly") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double v =
        rng.gaussian(0, 1e3) * std::pow(10, std::floor(rng.uniform(-9, 9)));
    REQUIRE(std::strtod(g17(v).c_str(), nullptr) == v);
  }
  REQUIRE(std::strtod(g17(0.1).c_str(), nullptr) == 0.1);
}

TEST_CASE("atomic write leaves only the final file") {
  TempDir dir;
  const auto p = dir.path / "x.txt";
  atomic_write(p, "hello\n");
  REQUIRE(read_file(p) == "hello\n");
  REQUIRE(!std::filesystem::exists(dir.path / "x.txt.tmp"));
}

TEST_CASE("imu and range csv round-trip") {
  TempDir dir;
  Rng rng(5);
  std::vector<ImuSample> imu(40);
  for (int i = 0; i < 40; ++i) {
    imu[i].t = i * 0.005 + rng.gaussian(0, 1e-6);
    for (int k = 0; k < 3; ++k) {
      imu[i].gyro(k) = rng.gaussian();
      imu[i].accel(k) = rng.gaussian(0, 10);
    }
  }
  write_imu_csv(dir.path / "imu.csv", imu);
  const auto imu2 = read_imu_csv(dir.path / "imu.csv");
  REQUIRE(imu2.size() == imu.size());
  for (size_t i = 0; i < imu.size(); ++i) {
    REQUIRE(imu2[i].t == imu[i].t);
    REQUIRE(imu2[i].gyro == imu[i].gyro);
    REQUIRE(imu2[i].accel == imu[i].accel);
  }

  std::vector<RangeMeasurement> ranges;
  for (int i = 0; i < 25; ++i) {
    ranges.push_back({i * 0.1, i % 4, rng.gaussian(10, 3)});
  }
  write_ranges_csv(dir.path / "r.csv", ranges);
  const auto ranges2 = read_ranges_csv(dir.path / "r.csv");
  REQUIRE(ranges2.size() == ranges.size());
  for (size_t i = 0; i < ranges.size(); ++i) {
    REQUIRE(ranges2[i].t == ranges[i].t);
    REQUIRE(ranges2[i].anchor_id == ranges[i].anchor_id);
    REQUIRE(ranges2[i].range == ranges[i].range);
  }
}

TEST_CASE("anchor table round-trips") {
  TempDir dir;
  std::vector<AnchorState> anchors(3);
  for (int i = 0; i < 3; ++i) {
    anchors[i].id = i + 4;
    anchors[i].position = Vec3(0.1 * i, -2.5, 3.0 + i);
  }
  write_anchors_csv(dir.path / "a.csv", anchors);
  const auto back = read_anchors_csv(dir.path / "a.csv");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(back[i].id == anchors[i].id);
    REQUIRE(back[i].position == anchors[i].position);
  }
}

TEST_CASE("tum trajectory round-trips") {
  TempDir dir;
  Rng rng(8);
  TrajectoryEstimate traj;
  for (int i = 0; i < 30; ++i) {
    TimedPose s;
    s.t = i * 0.01;
    s.R = exp_so3(Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()));
    s.p = Vec3(rng.gaussian(0, 5), rng.gaussian(0, 5), rng.gaussian());
    traj.push_back(s);
  }
  write_tum(dir.path / "t.tum", traj);
  const auto back = read_tum(dir.path / "t.tum");
  REQUIRE(back.size() == traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    REQUIRE(back[i].t == traj[i].t);
    REQUIRE(back[i].p == traj[i].p);
    REQUIRE(boxminus(back[i].R, traj[i].R).norm() < 1e-12);
  }
  // The formatter itself is deterministic: same data, same bytes.
  write_tum(dir.path / "t2.tum", traj);
  REQUIRE(read_file(dir.path / "t2.tum") == read_file(dir.path / "t.tum"));
}

TEST_CASE("point cloud container round-trips and validates") {
  TempDir dir;
  Rng rng(21);
  std::vector<PointCloud> frames(3);
  frames[0].timestamp = 0.1;
  for (int i = 0; i < 50; ++i) {
    frames[0].points.push_back(
        Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()));
  }
  frames[1].timestamp = 0.2;  // deliberately empty frame
  frames[2].timestamp = 0.3;
  frames[2].points.push_back(Vec3(1, 2, 3));
  write_clouds(dir.path / "c.ulpc", frames);
  const auto back = read_clouds(dir.path / "c.ulpc");
  REQUIRE(back.size() == 3);
  for (size_t f = 0; f < 3; ++f) {
    REQUIRE(back[f].timestamp == frames[f].timestamp);
    REQUIRE(back[f].points.size() == frames[f].points.size());
    for (size_t i = 0; i < frames[f].points.size(); ++i) {
      REQUIRE(back[f].points[i] == frames[f].points[i]);
    }
  }

  atomic_write(dir.path / "bad.ulpc", "NOPE");
  REQUIRE_THROWS(read_clouds(dir.path / "bad.ulpc"));
  const std::string good = read_file(dir.path / "c.ulpc");
  atomic_write(dir.path / "cut.ulpc", good.substr(0, good.size() / 2));
  REQUIRE_THROWS(read_clouds(dir.path / "cut.ulpc"));
}

TEST_CASE("scenario json round-trips every field") {
  TempDir dir;
  Scenario sc = make_nlos_scenario(2, 77, 45.0);  // zones, errors, dropout
  sc.trajectory.wp_times = {0, 5, 10};
  sc.trajectory.wp_points = {Vec3(0, 0, 0), Vec3(1, 2, 0), Vec3(2, 0, 1)};
  sc.trajectory.follow_yaw = false;
  sc.lidar.extrinsics.R = exp_so3(Vec3(0.01, -0.02, 0.3));
  sc.lidar.extrinsics.p = Vec3(0.1, 0.02, -0.05);
  write_scenario_json(dir.path / "s.json", sc);
  const Scenario back = read_scenario_json(dir.path / "s.json");

  REQUIRE(back.name == sc.name);
  REQUIRE(back.seed == sc.seed);
  REQUIRE(back.duration == sc.duration);
  REQUIRE(back.trajectory.type == sc.trajectory.type);
  REQUIRE(back.trajectory.center == sc.trajectory.center);
  REQUIRE(back.trajectory.ax == sc.trajectory.ax);
  REQUIRE(back.trajectory.ay == sc.trajectory.ay);
  REQUIRE(back.trajectory.az == sc.trajectory.az);
  REQUIRE(back.trajectory.omega == sc.trajectory.omega);
  REQUIRE(back.trajectory.wp_times == sc.trajectory.wp_times);
  REQUIRE(back.trajectory.wp_points.size() == 3);
  REQUIRE(back.trajectory.follow_yaw == false);
  REQUIRE(back.planes.size() == sc.planes.size());
  for (size_t i = 0; i < sc.planes.size(); ++i) {
    REQUIRE(back.planes[i].origin == sc.planes[i].origin);
    REQUIRE(back.planes[i].edge_u == sc.planes[i].edge_u);
    REQUIRE(back.planes[i].edge_v == sc.planes[i].edge_v);
  }
  REQUIRE(back.anchors.size() == sc.anchors.size());
  for (size_t i = 0; i < sc.anchors.size(); ++i) {
    REQUIRE(back.anchors[i].id == sc.anchors[i].id);
    REQUIRE(back.anchors[i].position == sc.anchors[i].position);
    REQUIRE(back.anchors[i].scale == sc.anchors[i].scale);
    REQUIRE(back.anchors[i].bias == sc.anchors[i].bias);
    REQUIRE(back.anchors[i].dropout_prob == sc.anchors[i].dropout_prob);
    REQUIRE(back.anchors[i].nlos_prob == sc.anchors[i].nlos_prob);
  }
  REQUIRE(back.imu_rate == sc.imu_rate);
  REQUIRE(back.imu_noise.gyro_noise_density ==
          sc.imu_noise.gyro_noise_density);
  REQUIRE(back.imu_noise.accel_noise_density ==
          sc.imu_noise.accel_noise_density);
  REQUIRE(back.gyro_bias == sc.gyro_bias);
  REQUIRE(back.accel_bias == sc.accel_bias);
  REQUIRE(back.lidar.rate == sc.lidar.rate);
  REQUIRE(back.lidar.points_per_frame == sc.lidar.points_per_frame);
  REQUIRE(back.lidar.noise_std == sc.lidar.noise_std);
  REQUIRE(boxminus(back.lidar.extrinsics.R, sc.lidar.extrinsics.R).norm() <
          1e-15);
  REQUIRE(back.lidar.extrinsics.p == sc.lidar.extrinsics.p);
  REQUIRE(back.uwb.rate == sc.uwb.rate);
  REQUIRE(back.uwb.noise_std == sc.uwb.noise_std);
  REQUIRE(back.uwb.tag_lever_arm == sc.uwb.tag_lever_arm);
  REQUIRE(back.nlos.offset_min == sc.nlos.offset_min);
  REQUIRE(back.nlos.offset_max == sc.nlos.offset_max);
  REQUIRE(back.nlos.zones.size() == sc.nlos.zones.size());
  for (size_t i = 0; i < sc.nlos.zones.size(); ++i) {
    REQUIRE(back.nlos.zones[i].lo == sc.nlos.zones[i].lo);
    REQUIRE(back.nlos.zones[i].hi == sc.nlos.zones[i].hi);
    REQUIRE(back.nlos.zones[i].anchor_ids == sc.nlos.zones[i].anchor_ids);
    REQUIRE(back.nlos.zones[i].prob == sc.nlos.zones[i].prob);
  }

  // Round-tripped scenarios must simulate identically.
  const SimulatedData a = simulate(sc);
  const SimulatedData b = simulate(back);
  REQUIRE(a.imu.size() == b.imu.size());
  REQUIRE(a.imu.back().gyro == b.imu.back().gyro);
  REQUIRE(a.uwb.size() == b.uwb.size());
  REQUIRE(a.uwb.back().range == b.uwb.back().range);
}

TEST_CASE("documents without their schema id are rejected") {
  TempDir dir;
  atomic_write(dir.path / "s.json", "{\"name\": \"x\"}\n");
  REQUIRE_THROWS(read_scenario_json(dir.path / "s.json"));
  atomic_write(dir.path / "m.json", "{\"schema\": \"other-v9\"}\n");
  REQUIRE_THROWS(read_metrics_json(dir.path / "m.json"));
}

TEST_CASE("metrics json round-trips") {
  TempDir dir;
  const auto truth = line_truth(20, Vec3(1, 1, 0));
  const auto est = offset_estimate(truth, Vec3(0.03, -0.04, 0.01));
  const MetricsReport r = make_report("offset", est, truth);
  write_metrics_json(dir.path / "m.json", r);
  const MetricsReport back = read_metrics_json(dir.path / "m.json");
  REQUIRE(back.label == r.label);
  REQUIRE(back.rmse_2d == r.rmse_2d);
  REQUIRE(back.rmse_3d == r.rmse_3d);
  REQUIRE(back.mean_error == r.mean_error);
  REQUIRE(back.max_error == r.max_error);
  REQUIRE(back.samples == r.samples);
  REQUIRE(back.cdf_levels == r.cdf_levels);
  REQUIRE(back.cdf_values == r.cdf_values);
}

TEST_CASE("diagnostics csv has one row per record") {
  TempDir dir;
  std::vector<RansacDiagnostic> rows(2);
  rows[0].t = 1.5;
  rows[0].anchor_id = 2;
  rows[0].window_size = 20;
  rows[0].inliers = 17;
  rows[0].position = Vec3(1, 2, 0.5);
  rows[0].residual_sum = 0.31;
  rows[1].t = 1.6;
  rows[1].anchor_id = 3;
  write_diagnostics_csv(dir.path / "d.csv", rows);
  const std::string text = read_file(dir.path / "d.csv");
  REQUIRE(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2
  REQUIRE(text.find("1.5,2,20,17,") != std::string::npos);
}
