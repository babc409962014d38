#pragma once

// Canned scenarios: a clean LOS room run, a systematic range-error run, a
// family of NLOS scenes for the ablation suite, and a LiDAR-degenerate
// corridor (one wall plus the floor). These back the CLI presets and the
// acceptance protocols.

#include <cmath>
#include <optional>
#include <string>

#include "ulins/simulator.hpp"

namespace ulins {

namespace detail {

// Room 22 x 24 m, four anchors near the corners at staggered heights.
inline void room_with_anchors(Scenario& sc) {
  sc.planes = make_room_planes(Vec3(0, 0, 0), Vec3(22, 24, 3));
  const Vec3 corners[4] = {Vec3(1, 1, 2.2), Vec3(21, 1, 1.6),
                           Vec3(1, 23, 2.4), Vec3(21, 23, 1.2)};
  for (int i = 0; i < 4; ++i) {
    AnchorTruth a;
    a.id = i;
    a.position = corners[i];
    sc.anchors.push_back(a);
  }
}

// Figure-eight spanning most of the room, peak speed just under 1.5 m/s.
// The wide sweep and the vertical bob matter: they spread the anchor ranges
// out, which is what separates a multiplicative range error from an additive
// one.
inline void room_figure_eight(Scenario& sc) {
  sc.trajectory.type = TrajectorySpec::Type::kFigureEight;
  sc.trajectory.center = Vec3(11, 12, 1.0);
  sc.trajectory.ax = 9.0;
  sc.trajectory.ay = 20.0;
  sc.trajectory.az = 0.6;
  sc.trajectory.omega = 0.068;
}

inline void default_imu_errors(Scenario& sc) {
  sc.gyro_bias = Vec3(1e-4, -2e-4, 1.5e-4);
  sc.accel_bias = Vec3(2e-3, -1e-3, 3e-3);
}

}  // namespace detail

// Clean line-of-sight reference scene: ideal anchors, no NLOS.
inline Scenario make_los_scenario(std::uint64_t seed = 1,
                                  double duration = 120.0) {
  Scenario sc;
  sc.name = "los";
  sc.seed = seed;
  sc.duration = duration;
  detail::room_with_anchors(sc);
  detail::room_figure_eight(sc);
  detail::default_imu_errors(sc);
  sc.lidar.points_per_frame = 800;
  return sc;
}

// LOS geometry but every anchor carries a systematic scale and bias, for
// probing the online error-model estimation.
inline Scenario make_systematic_scenario(std::uint64_t seed = 1,
                                         double scale = 1.01,
                                         double bias = 0.2) {
  Scenario sc = make_los_scenario(seed);
  sc.name = "systematic";
  for (AnchorTruth& a : sc.anchors) {
    a.scale = scale;
    a.bias = bias;
  }
  return sc;
}

// NLOS ablation scenes. Each layout combines per-anchor systematic errors
// with spatial NLOS zones (moderate offsets that single-epoch gating only
// partially catches) plus some zone-free corruption on one anchor.
inline Scenario make_nlos_scenario(int layout, std::uint64_t seed = 1,
                                   double duration = 60.0) {
  Scenario sc = make_los_scenario(seed, duration);
  sc.name = "nlos-" + std::to_string(layout);
  const double scales[4] = {1.005, 0.995, 1.01, 1.002};
  const double biases[4] = {0.15, 0.25, 0.1, 0.2};
  for (int i = 0; i < 4; ++i) {
    sc.anchors[i].scale = scales[i];
    sc.anchors[i].bias = biases[i];
  }
  sc.nlos.offset_min = 0.15;
  sc.nlos.offset_max = 0.8;
  switch (layout % 3) {
    case 0: {
      NlosZone z;  // west half of the room blocks A0 and A1
      z.lo = Vec3(0, 0, 0);
      z.hi = Vec3(11, 24, 3);
      z.anchor_ids = {0, 1};
      z.prob = 0.7;
      sc.nlos.zones.push_back(z);
      break;
    }
    case 1: {
      NlosZone z;  // north half blocks A1 and A2
      z.lo = Vec3(0, 12, 0);
      z.hi = Vec3(22, 24, 3);
      z.anchor_ids = {1, 2};
      z.prob = 0.7;
      sc.nlos.zones.push_back(z);
      sc.anchors[3].nlos_prob = 0.1;
      break;
    }
    default: {
      NlosZone a;  // two smaller pockets on opposite corners
      a.lo = Vec3(0, 0, 0);
      a.hi = Vec3(10, 10, 3);
      a.anchor_ids = {0, 3};
      a.prob = 0.8;
      NlosZone b;
      b.lo = Vec3(12, 14, 0);
      b.hi = Vec3(22, 24, 3);
      b.anchor_ids = {2};
      b.prob = 0.8;
      sc.nlos.zones.push_back(a);
      sc.nlos.zones.push_back(b);
      break;
    }
  }
  return sc;
}

// LiDAR-degenerate corridor: one long wall plus the floor, so translation
// along the corridor axis is invisible to the LiDAR. The platform loops a
// flat oval with real heading turns; anchors stay clean LOS.
inline Scenario make_degenerate_scenario(std::uint64_t seed = 1,
                                         double duration = 120.0) {
  Scenario sc;
  sc.name = "degenerate";
  sc.seed = seed;
  sc.duration = duration;

  PlaneRect floor;
  floor.origin = Vec3(0, 0, 0);
  floor.edge_u = Vec3(60, 0, 0);
  floor.edge_v = Vec3(0, 8, 0);
  PlaneRect wall;
  wall.origin = Vec3(0, 0, 0);
  wall.edge_u = Vec3(60, 0, 0);
  wall.edge_v = Vec3(0, 0, 4);
  sc.planes = {floor, wall};

  const Vec3 anchor_pos[4] = {Vec3(1, 1, 2.2), Vec3(59, 1, 1.8),
                              Vec3(1, 7, 2.0), Vec3(59, 7, 1.4)};
  for (int i = 0; i < 4; ++i) {
    AnchorTruth a;
    a.id = i;
    a.position = anchor_pos[i];
    sc.anchors.push_back(a);
  }

  sc.trajectory.type = TrajectorySpec::Type::kWaypoints;
  sc.trajectory.follow_yaw = true;
  const double speed = 1.3;
  const Vec3 loop[6] = {Vec3(8, 1.5, 0.8),  Vec3(30, 1.5, 0.8),
                        Vec3(52, 1.5, 0.8), Vec3(52, 4.5, 0.8),
                        Vec3(30, 4.5, 0.8), Vec3(8, 4.5, 0.8)};
  double t = 0.0;
  Vec3 prev = loop[0];
  sc.trajectory.wp_times.push_back(t);
  sc.trajectory.wp_points.push_back(prev);
  int k = 1;
  while (t < duration + 10.0) {
    const Vec3 next = loop[k % 6];
    t += (next - prev).norm() / speed;
    sc.trajectory.wp_times.push_back(t);
    sc.trajectory.wp_points.push_back(next);
    prev = next;
    ++k;
  }

  // Cheap-IMU noise so the unobservable corridor axis drifts visibly.
  sc.imu_noise.accel_noise_density = 6e-3;
  sc.gyro_bias = Vec3(1e-4, -1e-4, 2e-4);
  sc.accel_bias = Vec3(1e-3, 5e-4, -1e-3);
  sc.lidar.points_per_frame = 600;
  return sc;
}

inline std::optional<Scenario> preset_scenario(const std::string& name,
                                               std::uint64_t seed) {
  if (name == "los") return make_los_scenario(seed);
  if (name == "systematic") return make_systematic_scenario(seed);
  if (name == "nlos-0") return make_nlos_scenario(0, seed);
  if (name == "nlos-1") return make_nlos_scenario(1, seed);
  if (name == "nlos-2") return make_nlos_scenario(2, seed);
  if (name == "degenerate") return make_degenerate_scenario(seed);
  return std::nullopt;
}

inline const char* preset_names() {
  return "los, systematic, nlos-0, nlos-1, nlos-2, degenerate";
}

}  // namespace ulins
