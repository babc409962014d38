#pragma once

// Full filter state: nav block, LiDAR-IMU extrinsics, per-anchor UWB
// systematic range error (scale + bias), and two sliding windows of pose
// clones. The error-state vector is laid out as
//
//   [ dtheta dp dv dbg dba | dtheta_ext dp_ext | ds_0..ds_{q-1} db_0..db_{q-1}
//     | lidar clones (6 each) | uwb clones (6 each) ]
//
// Clone blocks shift when clones are inserted or marginalized; everything
// addresses them through StateLayout instead of hard-coded offsets.

#include <stdexcept>
#include <vector>

#include "ulins/geometry.hpp"
#include "ulins/ins.hpp"

namespace ulins {

struct AnchorState {
  int id = 0;
  Vec3 position = Vec3::Zero();  // surveyed, world frame; not estimated
  double scale = 1.0;            // estimated multiplicative range error
  double bias = 0.0;             // estimated additive range error, m
};

enum class CloneKind { kLidar, kUwb };

struct CloneState {
  long id = -1;          // stable handle, unique across both windows
  double timestamp = 0;  // s
  Pose pose;             // IMU body pose in world at the clone time
};

struct StateLayout {
  int num_anchors = 0;
  int num_lidar = 0;
  int num_uwb = 0;

  static constexpr int kAttitude = 0;
  static constexpr int kPosition = 3;
  static constexpr int kVelocity = 6;
  static constexpr int kGyroBias = 9;
  static constexpr int kAccelBias = 12;
  static constexpr int kExtRot = 15;
  static constexpr int kExtPos = 18;
  static constexpr int kNavDim = 15;
  static constexpr int kAnchorBase = 21;

  int scale(int i) const { return kAnchorBase + i; }
  int bias(int i) const { return kAnchorBase + num_anchors + i; }
  int lidar_clone(int j) const {
    return kAnchorBase + 2 * num_anchors + 6 * j;
  }
  int uwb_clone(int j) const {
    return kAnchorBase + 2 * num_anchors + 6 * (num_lidar + j);
  }
  int dim() const {
    return kAnchorBase + 2 * num_anchors + 6 * (num_lidar + num_uwb);
  }
};

struct FilterState {
  double time = 0.0;
  NavState nav;
  Pose extrinsics;  // LiDAR frame -> IMU body frame
  std::vector<AnchorState> anchors;
  std::vector<CloneState> lidar_clones;
  std::vector<CloneState> uwb_clones;
  Eigen::MatrixXd P;
  long next_clone_id = 0;

  StateLayout layout() const {
    StateLayout l;
    l.num_anchors = static_cast<int>(anchors.size());
    l.num_lidar = static_cast<int>(lidar_clones.size());
    l.num_uwb = static_cast<int>(uwb_clones.size());
    return l;
  }

  // Window index of a clone id, or -1.
  static int find_clone(const std::vector<CloneState>& window, long id) {
    for (size_t j = 0; j < window.size(); ++j) {
      if (window[j].id == id) return static_cast<int>(j);
    }
    return -1;
  }

  // boxplus fold of an error vector into every block.
  void apply_correction(const Eigen::VectorXd& dx) {
    const StateLayout l = layout();
    if (dx.size() != l.dim()) {
      throw std::invalid_argument("apply_correction: dimension mismatch");
    }
    nav.R = boxplus(nav.R, dx.segment<3>(StateLayout::kAttitude));
    nav.p += dx.segment<3>(StateLayout::kPosition);
    nav.v += dx.segment<3>(StateLayout::kVelocity);
    nav.bg += dx.segment<3>(StateLayout::kGyroBias);
    nav.ba += dx.segment<3>(StateLayout::kAccelBias);
    extrinsics.R = boxplus(extrinsics.R, dx.segment<3>(StateLayout::kExtRot));
    extrinsics.p += dx.segment<3>(StateLayout::kExtPos);
    for (int i = 0; i < l.num_anchors; ++i) {
      anchors[i].scale += dx(l.scale(i));
      anchors[i].bias += dx(l.bias(i));
    }
    for (int j = 0; j < l.num_lidar; ++j) {
      lidar_clones[j].pose = lidar_clones[j].pose.boxplus(
          dx.segment<6>(l.lidar_clone(j)));
    }
    for (int j = 0; j < l.num_uwb; ++j) {
      uwb_clones[j].pose = uwb_clones[j].pose.boxplus(
          dx.segment<6>(l.uwb_clone(j)));
    }
  }
};

// Per-block boxminus over the whole state: returns dx with x = ref boxplus dx.
// Both states must share the same anchor/clone layout.
inline Eigen::VectorXd error_between(const FilterState& x,
                                     const FilterState& ref) {
  const StateLayout l = x.layout();
  const StateLayout lr = ref.layout();
  if (l.num_anchors != lr.num_anchors || l.num_lidar != lr.num_lidar ||
      l.num_uwb != lr.num_uwb) {
    throw std::invalid_argument("error_between: layout mismatch");
  }
  Eigen::VectorXd dx(l.dim());
  dx.segment<3>(StateLayout::kAttitude) = boxminus(x.nav.R, ref.nav.R);
  dx.segment<3>(StateLayout::kPosition) = x.nav.p - ref.nav.p;
  dx.segment<3>(StateLayout::kVelocity) = x.nav.v - ref.nav.v;
  dx.segment<3>(StateLayout::kGyroBias) = x.nav.bg - ref.nav.bg;
  dx.segment<3>(StateLayout::kAccelBias) = x.nav.ba - ref.nav.ba;
  dx.segment<3>(StateLayout::kExtRot) =
      boxminus(x.extrinsics.R, ref.extrinsics.R);
  dx.segment<3>(StateLayout::kExtPos) = x.extrinsics.p - ref.extrinsics.p;
  for (int i = 0; i < l.num_anchors; ++i) {
    dx(l.scale(i)) = x.anchors[i].scale - ref.anchors[i].scale;
    dx(l.bias(i)) = x.anchors[i].bias - ref.anchors[i].bias;
  }
  for (int j = 0; j < l.num_lidar; ++j) {
    dx.segment<6>(l.lidar_clone(j)) =
        x.lidar_clones[j].pose.boxminus(ref.lidar_clones[j].pose);
  }
  for (int j = 0; j < l.num_uwb; ++j) {
    dx.segment<6>(l.uwb_clone(j)) =
        x.uwb_clones[j].pose.boxminus(ref.uwb_clones[j].pose);
  }
  return dx;
}

}  // namespace ulins
