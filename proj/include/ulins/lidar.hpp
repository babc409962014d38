#pragma once

// Frame-to-frame LiDAR pipeline: keyframe selection, keyframe map merging,
// projection into historical keyframes, 5-NN plane fit, and the point-to-plane
// residual rows with analytic Jacobians.

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ulins/kdtree.hpp"
#include "ulins/msckf.hpp"

namespace ulins {

struct PointCloud {
  double timestamp = 0.0;
  std::vector<Vec3> points;  // sensor frame
};

struct Plane {
  Vec3 n = Vec3::UnitZ();  // unit normal
  double d = 0.0;          // n^T p + d = 0 for points on the plane

  double distance(const Vec3& p) const { return std::abs(n.dot(p) + d); }
};

struct KeyframeThresholds {
  double translation = 0.5;   // m
  double rotation_deg = 10.0;
  double dt = 0.5;            // s
};

struct LidarConfig {
  KeyframeThresholds keyframe;
  int max_candidates = 1000;      // association candidates per keyframe
  int max_target_keyframes = 0;   // 0 = associate against the whole window
  double gate = 0.1;              // m, point-to-plane acceptance distance
  double degeneracy_ratio = 0.1;  // smallest/middle singular value limit
  double noise_std = 0.05;        // m, per-row point-to-plane sigma
};

// A keyframe owns its merged cloud in its own LiDAR frame. Non-keyframes are
// absorbed via merge(); the KD index is built once merging stops.
struct LidarKeyframe {
  double timestamp = 0.0;
  long clone_id = -1;  // -1 while the frame is current (not yet cloned)
  std::vector<Vec3> cloud;
  std::shared_ptr<const KdTree> index;

  void merge(const std::vector<Vec3>& points, const Pose& relative) {
    cloud.reserve(cloud.size() + points.size());
    for (const Vec3& p : points) cloud.push_back(relative.act(p));
  }
  void finalize() { index = std::make_shared<const KdTree>(cloud); }
};

inline bool select_keyframe(const Pose& current, const Pose& last_keyframe,
                            double dt_since, const KeyframeThresholds& thr) {
  const Vec6 rel = current.boxminus(last_keyframe);
  return rel.tail<3>().norm() > thr.translation ||
         rel.head<3>().norm() > thr.rotation_deg * M_PI / 180.0 ||
         dt_since > thr.dt;
}

// Point in the current sensor frame -> keyframe-k sensor frame.
inline Vec3 project_point(const Vec3& p, const Pose& pose_cur,
                          const Pose& pose_k) {
  return pose_k.R.transpose() * (pose_cur.R * p + pose_cur.p - pose_k.p);
}

// Least-squares plane through exactly five points (the 5-NN set). Returns
// nothing when the points do not define a unique plane: near-collinear sets,
// or blobs whose smallest-to-middle singular value ratio exceeds the limit.
inline std::optional<Plane> fit_plane(const std::vector<Vec3>& pts,
                                      double degeneracy_ratio = 0.1) {
  if (pts.size() != 5) {
    throw std::invalid_argument("fit_plane: expected exactly 5 points");
  }
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pts) centroid += p;
  centroid /= 5.0;
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 sv = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();  // ascending
  if (sv(1) <= 1e-6 * std::max(sv(2), 1e-12)) {
    return std::nullopt;  // collinear (sv(1) is numerical noise)
  }
  if (sv(0) / sv(1) > degeneracy_ratio) {
    return std::nullopt;  // not flat enough for a unique plane
  }
  Plane plane;
  plane.n = eig.eigenvectors().col(0);
  plane.d = -plane.n.dot(centroid);
  return plane;
}

// (current point index into the subsample, target clone, plane in the target
// keyframe's sensor frame)
struct Association {
  Vec3 point;     // current sensor frame
  long clone_id;  // target keyframe clone
  Plane plane;
};

namespace detail {
inline Pose lidar_pose(const FilterState& s, long clone_id) {
  if (clone_id < 0) return Pose(s.nav.R, s.nav.p).compose(s.extrinsics);
  const int j = FilterState::find_clone(s.lidar_clones, clone_id);
  if (j < 0) throw std::runtime_error("lidar_pose: stale clone id");
  return s.lidar_clones[j].pose.compose(s.extrinsics);
}
}  // namespace detail

// For each subsampled current point and each target keyframe: project with the
// current state estimate, search 5-NN in the target map, fit a plane, and gate
// on all six point-to-plane distances. Current points are walked with a
// deterministic stride so the candidate budget holds.
inline std::vector<Association> associate(
    const LidarKeyframe& current, const std::vector<LidarKeyframe>& window,
    const FilterState& state, const LidarConfig& cfg) {
  std::vector<Association> out;
  if (window.empty() || current.cloud.empty()) return out;

  const Pose cur_pose = detail::lidar_pose(state, current.clone_id);
  const int n = static_cast<int>(current.cloud.size());
  const int stride = std::max(1, (n + cfg.max_candidates - 1) / cfg.max_candidates);

  const int first_target =
      (cfg.max_target_keyframes > 0 &&
       static_cast<int>(window.size()) > cfg.max_target_keyframes)
          ? static_cast<int>(window.size()) - cfg.max_target_keyframes
          : 0;

  std::vector<Vec3> nn(5);
  for (int i = 0; i < n; i += stride) {
    const Vec3& p = current.cloud[i];
    for (size_t k = static_cast<size_t>(first_target); k < window.size(); ++k) {
      const LidarKeyframe& target = window[k];
      if (!target.index || target.index->size() < 5) continue;
      const Pose target_pose = detail::lidar_pose(state, target.clone_id);
      const Vec3 pk = project_point(p, cur_pose, target_pose);
      const std::vector<int> idx = target.index->knn(pk, 5);
      if (idx.size() < 5) continue;
      for (int j = 0; j < 5; ++j) nn[j] = target.index->point(idx[j]);
      const auto plane = fit_plane(nn, cfg.degeneracy_ratio);
      if (!plane) continue;
      bool ok = plane->distance(pk) < cfg.gate;
      for (int j = 0; ok && j < 5; ++j) ok = plane->distance(nn[j]) < cfg.gate;
      if (!ok) continue;
      out.push_back({p, target.clone_id, *plane});
    }
  }
  return out;
}

// One point-to-plane row. The residual is n^T p_bar + d; the stored Jacobian
// follows the measurement convention residual ~= H dx + noise, i.e.
// H = -d(residual)/d(dx). Depends on the current IMU pose, the extrinsics and
// the target clone pose; clone_id < 0 means the current pose plays both roles
// (then the row is degenerate and only extrinsic terms survive).
inline void lidar_residual_row(const Association& assoc,
                               const FilterState& state, double noise_std,
                               Eigen::VectorXd& residual, Eigen::MatrixXd& H,
                               Eigen::VectorXd& noise_var, int row) {
  const StateLayout l = state.layout();
  const int j = FilterState::find_clone(state.lidar_clones, assoc.clone_id);
  if (j < 0) throw std::runtime_error("lidar_residual_row: stale clone id");

  const Mat3& Re = state.extrinsics.R;
  const Vec3& pe = state.extrinsics.p;
  const Mat3& Rb = state.nav.R;
  const Mat3& Rk = state.lidar_clones[j].pose.R;
  const Vec3& pk = state.lidar_clones[j].pose.p;

  const Vec3 a = Re * assoc.point + pe;             // body frame
  const Vec3 w = Rb * a + state.nav.p;              // world
  const Vec3 q = Rk.transpose() * (w - pk);         // keyframe body frame
  const Vec3 pbar = Re.transpose() * (q - pe);      // keyframe sensor frame

  residual(row) = assoc.plane.n.dot(pbar) + assoc.plane.d;
  noise_var(row) = noise_std * noise_std;

  const Eigen::RowVector3d nt = assoc.plane.n.transpose();
  const Mat3 RetRkt = Re.transpose() * Rk.transpose();
  // d(pbar)/d(each error block), right-perturbation convention.
  const Mat3 d_th_b = -RetRkt * Rb * skew(a);
  const Mat3 d_p_b = RetRkt;
  const Mat3 d_th_k = Re.transpose() * skew(q);
  const Mat3 d_p_k = -RetRkt;
  const Mat3 d_th_e = -RetRkt * Rb * Re * skew(assoc.point) + skew(pbar);
  const Mat3 d_p_e = RetRkt * Rb - Re.transpose();

  H.row(row).setZero();
  H.block<1, 3>(row, StateLayout::kAttitude) = -nt * d_th_b;
  H.block<1, 3>(row, StateLayout::kPosition) = -nt * d_p_b;
  H.block<1, 3>(row, StateLayout::kExtRot) = -nt * d_th_e;
  H.block<1, 3>(row, StateLayout::kExtPos) = -nt * d_p_e;
  H.block<1, 3>(row, l.lidar_clone(j)) = -nt * d_th_k;
  H.block<1, 3>(row, l.lidar_clone(j) + 3) = -nt * d_p_k;
}

// Stacks all associations (optionally capped with a deterministic stride) into
// one measurement.
inline LinearizedMeasurement lidar_measurement(
    const std::vector<Association>& assocs, const FilterState& state,
    const LidarConfig& cfg, int max_rows = 0) {
  int m = static_cast<int>(assocs.size());
  int stride = 1;
  if (max_rows > 0 && m > max_rows) {
    stride = (m + max_rows - 1) / max_rows;
    m = (static_cast<int>(assocs.size()) + stride - 1) / stride;
  }
  LinearizedMeasurement meas;
  meas.residual.resize(m);
  meas.H.resize(m, state.layout().dim());
  meas.noise_var.resize(m);
  int row = 0;
  for (size_t i = 0; i < assocs.size(); i += stride) {
    lidar_residual_row(assocs[i], state, cfg.noise_std, meas.residual, meas.H,
                       meas.noise_var, row++);
  }
  return meas;
}

}  // namespace ulins
