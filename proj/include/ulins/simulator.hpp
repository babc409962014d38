#pragma once

// Deterministic sensor simulator: ground-truth trajectory plus IMU, LiDAR and
// UWB streams with configurable noise, NLOS injection and dropouts. Everything
// is a pure function of (Scenario, seed); each channel draws from its own
// derived RNG stream so channels never perturb each other.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulins/ins.hpp"
#include "ulins/lidar.hpp"
#include "ulins/random.hpp"
#include "ulins/trajectory.hpp"

namespace ulins {

// Bounded rectangle: corner plus two edge vectors.
struct PlaneRect {
  Vec3 origin = Vec3::Zero();
  Vec3 edge_u = Vec3::UnitX();
  Vec3 edge_v = Vec3::UnitY();

  Vec3 normal() const { return edge_u.cross(edge_v).normalized(); }
};

struct AnchorTruth {
  int id = 0;
  Vec3 position = Vec3::Zero();
  double scale = 1.0;         // true multiplicative error
  double bias = 0.0;          // true additive error, m
  double dropout_prob = 0.0;
  double nlos_prob = 0.0;     // per-measurement probability outside zones
};

// Inside the box, ranges to the listed anchors go NLOS with this probability.
struct NlosZone {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  std::vector<int> anchor_ids;
  double prob = 1.0;

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct NlosSpec {
  double offset_min = 0.3;  // m; positive-only by default
  double offset_max = 2.0;
  std::vector<NlosZone> zones;
};

struct TrajectorySpec {
  enum class Type { kLine, kCircle, kFigureEight, kWaypoints };
  Type type = Type::kFigureEight;
  // line
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitY();
  double amplitude = 5.0;
  double yaw = 0.0;
  // circle / figure-eight
  Vec3 center = Vec3::Zero();
  double radius = 5.0;
  double omega = 0.1;  // rad/s parameter rate (also for line oscillation)
  double phase = 0.0;
  double ax = 8.0, ay = 6.0, az = 0.0;
  // waypoints
  std::vector<double> wp_times;
  std::vector<Vec3> wp_points;
  bool follow_yaw = true;
};

inline std::unique_ptr<Trajectory> make_trajectory(const TrajectorySpec& s) {
  switch (s.type) {
    case TrajectorySpec::Type::kLine:
      return std::make_unique<LineTrajectory>(s.origin, s.direction,
                                              s.amplitude, s.omega, s.yaw);
    case TrajectorySpec::Type::kCircle:
      return std::make_unique<CircleTrajectory>(s.center, s.radius, s.omega,
                                                s.phase);
    case TrajectorySpec::Type::kFigureEight:
      return std::make_unique<FigureEightTrajectory>(s.center, s.ax, s.ay,
                                                     s.omega, s.az, s.phase);
    case TrajectorySpec::Type::kWaypoints:
      return std::make_unique<WaypointTrajectory>(s.wp_times, s.wp_points,
                                                  s.follow_yaw, s.yaw);
  }
  throw std::logic_error("make_trajectory: unknown type");
}

struct LidarSimConfig {
  double rate = 10.0;          // Hz
  int points_per_frame = 800;
  double fov_deg = 70.0;       // full cone angle around body +x
  double max_range = 40.0;     // m
  double noise_std = 0.01;     // m, isotropic
  Pose extrinsics;             // sensor -> body
};

struct UwbSimConfig {
  double rate = 5.0;           // Hz
  double noise_std = 0.03;     // m
  Vec3 tag_lever_arm = Vec3(0, 0, 0.25);  // body frame
};

struct Scenario {
  std::string name = "scenario";
  double duration = 120.0;  // s
  std::uint64_t seed = 1;
  TrajectorySpec trajectory;
  std::vector<PlaneRect> planes;
  std::vector<AnchorTruth> anchors;
  double imu_rate = 200.0;
  ImuNoiseModel imu_noise;
  Vec3 gyro_bias = Vec3::Zero();   // true constant biases
  Vec3 accel_bias = Vec3::Zero();
  LidarSimConfig lidar;
  UwbSimConfig uwb;
  NlosSpec nlos;

  void validate() const {
    if (!(duration > 0)) throw std::invalid_argument("scenario: duration <= 0");
    if (!(imu_rate > 0) || !(lidar.rate > 0) || !(uwb.rate > 0)) {
      throw std::invalid_argument("scenario: sensor rates must be > 0");
    }
    if (nlos.offset_max < nlos.offset_min) {
      throw std::invalid_argument("scenario: NLOS offset range inverted");
    }
  }
};

struct RangeMeasurement {
  double t = 0.0;
  int anchor_id = 0;
  double range = 0.0;  // m, as measured (scale/bias/NLOS applied)
};

struct GroundTruthSample {
  double t = 0.0;
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

struct GroundTruth {
  std::vector<GroundTruthSample> samples;  // at IMU ticks, t=0 first
  std::vector<AnchorTruth> anchors;
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
};

struct SimulatedData {
  Scenario scenario;
  std::vector<ImuSample> imu;          // sample at t covers (t-dt, t]
  std::vector<PointCloud> lidar;
  std::vector<RangeMeasurement> uwb;   // one cycle shares a timestamp
  GroundTruth truth;
};

// IMU stream by inverse mechanization. Samples are interval averages: the
// true rates are evaluated at the interval midpoint, which is what an
// integrating IMU reports and what keeps ZOH re-integration second-order.
inline std::vector<ImuSample> synth_imu(const Trajectory& traj,
                                        const Scenario& sc, Rng& rng) {
  const double dt = 1.0 / sc.imu_rate;
  const int steps = static_cast<int>(std::round(sc.duration * sc.imu_rate));
  const Vec3 g = sc.imu_noise.gravity();
  const double gyro_sigma = sc.imu_noise.gyro_noise_density / std::sqrt(dt);
  const double accel_sigma = sc.imu_noise.accel_noise_density / std::sqrt(dt);

  std::vector<ImuSample> out;
  out.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double t_mid = (i + 0.5) * dt;
    const TrajectorySample ts = traj.at(t_mid);
    ImuSample m;
    m.t = (i + 1) * dt;
    m.gyro = ts.omega + sc.gyro_bias;
    m.accel = ts.R.transpose() * (ts.a - g) + sc.accel_bias;
    for (int k = 0; k < 3; ++k) {
      m.gyro[k] += rng.gaussian(0, gyro_sigma);
      m.accel[k] += rng.gaussian(0, accel_sigma);
    }
    out.push_back(m);
  }
  return out;
}

// LiDAR frames: uniform draws on the plane rectangles, kept when inside the
// forward FOV cone and range limit, expressed in the sensor frame with
// isotropic noise. No occlusion model; scenes are built so that surfaces seen
// through others do not matter. A frame with nothing visible stays empty.
inline std::vector<PointCloud> synth_lidar(const Trajectory& traj,
                                           const Scenario& sc, Rng& rng) {
  std::vector<PointCloud> out;
  if (sc.planes.empty()) {
    throw std::invalid_argument("synth_lidar: no planes in scenario");
  }
  const double dt = 1.0 / sc.lidar.rate;
  const double cos_half = std::cos(0.5 * sc.lidar.fov_deg * M_PI / 180.0);
  const int frames = static_cast<int>(std::floor(sc.duration * sc.lidar.rate)) + 1;

  for (int f = 0; f < frames; ++f) {
    const double t = f * dt;
    if (t > sc.duration) break;
    const TrajectorySample ts = traj.at(t);
    const Pose sensor = Pose(ts.R, ts.p).compose(sc.lidar.extrinsics);
    PointCloud cloud;
    cloud.timestamp = t;
    const int target = sc.lidar.points_per_frame;
    const int max_attempts = 20 * target;
    for (int a = 0; a < max_attempts &&
                    static_cast<int>(cloud.points.size()) < target; ++a) {
      const auto& plane = sc.planes[rng.bounded(sc.planes.size())];
      const Vec3 w = plane.origin + rng.uniform() * plane.edge_u +
                     rng.uniform() * plane.edge_v;
      const Vec3 d = w - sensor.p;
      const double range = d.norm();
      if (range > sc.lidar.max_range || range < 1e-6) continue;
      const Vec3 dir_s = sensor.R.transpose() * (d / range);
      if (dir_s.x() < cos_half) continue;
      Vec3 p_s = sensor.R.transpose() * (w - sensor.p);
      for (int k = 0; k < 3; ++k) {
        p_s[k] += rng.gaussian(0, sc.lidar.noise_std);
      }
      cloud.points.push_back(p_s);
    }
    out.push_back(std::move(cloud));
  }
  return out;
}

// UWB ranges, affine forward model: measured = s * true_distance + b + n,
// plus an NLOS offset with per-anchor or zone probability, minus dropouts.
// The draw count per (cycle, anchor) is fixed so outcomes never shift the
// stream for later measurements.
inline std::vector<RangeMeasurement> synth_uwb(const Trajectory& traj,
                                               const Scenario& sc, Rng& rng) {
  std::vector<RangeMeasurement> out;
  if (sc.anchors.empty()) {
    throw std::invalid_argument("synth_uwb: no anchors in scenario");
  }
  const double dt = 1.0 / sc.uwb.rate;
  const int cycles = static_cast<int>(std::floor(sc.duration * sc.uwb.rate)) + 1;
  for (int c = 0; c < cycles; ++c) {
    const double t = c * dt;
    if (t > sc.duration) break;
    const TrajectorySample ts = traj.at(t);
    const Vec3 tag = ts.p + ts.R * sc.uwb.tag_lever_arm;
    for (const AnchorTruth& anchor : sc.anchors) {
      const double u_dropout = rng.uniform();
      const double noise = rng.gaussian(0, sc.uwb.noise_std);
      const double u_nlos = rng.uniform();
      const double offset = rng.uniform(sc.nlos.offset_min, sc.nlos.offset_max);

      if (u_dropout < anchor.dropout_prob) continue;
      double p_nlos = anchor.nlos_prob;
      for (const NlosZone& z : sc.nlos.zones) {
        if (!z.contains(tag)) continue;
        for (int id : z.anchor_ids) {
          if (id == anchor.id) p_nlos = std::max(p_nlos, z.prob);
        }
      }
      const double true_dist = (tag - anchor.position).norm();
      double measured = anchor.scale * true_dist + anchor.bias + noise;
      if (u_nlos < p_nlos) measured += offset;
      out.push_back({t, anchor.id, measured});
    }
  }
  return out;
}

inline GroundTruth synth_truth(const Trajectory& traj, const Scenario& sc) {
  GroundTruth gt;
  const double dt = 1.0 / sc.imu_rate;
  const int steps = static_cast<int>(std::round(sc.duration * sc.imu_rate));
  gt.samples.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    const TrajectorySample ts = traj.at(i * dt);
    gt.samples.push_back({i * dt, ts.R, ts.p, ts.v});
  }
  gt.anchors = sc.anchors;
  gt.gyro_bias = sc.gyro_bias;
  gt.accel_bias = sc.accel_bias;
  return gt;
}

// Floor plus four walls spanning [lo, hi] (no ceiling).
inline std::vector<PlaneRect> make_room_planes(const Vec3& lo, const Vec3& hi) {
  const Vec3 dx(hi.x() - lo.x(), 0, 0);
  const Vec3 dy(0, hi.y() - lo.y(), 0);
  const Vec3 dz(0, 0, hi.z() - lo.z());
  return {
      {lo, dx, dy},                          // floor
      {lo, dy, dz},                          // wall x = lo.x
      {Vec3(hi.x(), lo.y(), lo.z()), dy, dz},  // wall x = hi.x
      {lo, dx, dz},                          // wall y = lo.y
      {Vec3(lo.x(), hi.y(), lo.z()), dx, dz},  // wall y = hi.y
  };
}

inline SimulatedData simulate(const Scenario& sc) {
  sc.validate();
  const auto traj = make_trajectory(sc.trajectory);
  SimulatedData data;
  data.scenario = sc;
  Rng rng_imu(derive_seed(sc.seed, 1));
  Rng rng_lidar(derive_seed(sc.seed, 2));
  Rng rng_uwb(derive_seed(sc.seed, 3));
  data.imu = synth_imu(*traj, sc, rng_imu);
  data.lidar = synth_lidar(*traj, sc, rng_lidar);
  data.uwb = synth_uwb(*traj, sc, rng_uwb);
  data.truth = synth_truth(*traj, sc);
  return data;
}

}  // namespace ulins
