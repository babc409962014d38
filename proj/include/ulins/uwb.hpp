#pragma once

// UWB range error model: online correction of the per-anchor scale/bias,
// epoch (UWB keyframe) construction, and the range residual rows against
// surveyed anchor positions.

#include <stdexcept>
#include <vector>

#include "ulins/msckf.hpp"
#include "ulins/simulator.hpp"

namespace ulins {

struct TagExtrinsics {
  Vec3 lever_arm = Vec3(0, 0, 0.25);  // IMU body frame -> tag, m
};

struct UwbEpochEntry {
  int anchor_id = 0;
  double raw = 0.0;        // measured range, m
  double corrected = 0.0;  // (raw - bias) / scale at build time
  bool consumed = false;   // became an EKF row already
};

// One ranging cycle bound to a pose clone.
struct UwbEpoch {
  double timestamp = 0.0;
  long clone_id = -1;  // assigned when the clone is augmented
  std::vector<UwbEpochEntry> entries;
};

// Inversion of the range error model at the current estimates.
inline double correct_range(double raw, double scale, double bias) {
  if (!(scale > 0.0)) {
    throw std::runtime_error("correct_range: scale estimate <= 0");
  }
  return (raw - bias) / scale;
}

// Groups the ranges of one ranging cycle (everything within `window` seconds
// of the first pending timestamp) into an epoch, dropping duplicate anchors
// (first one wins) and applying the systematic-error correction with the
// state's current estimates. Ranges from anchors missing in the state are
// ignored.
inline UwbEpoch build_uwb_epoch(const std::vector<RangeMeasurement>& pending,
                                const FilterState& state, double window) {
  if (pending.empty()) {
    throw std::invalid_argument("build_uwb_epoch: no pending ranges");
  }
  UwbEpoch epoch;
  epoch.timestamp = pending.front().t;
  for (const RangeMeasurement& r : pending) {
    if (r.t > epoch.timestamp + window) break;
    bool duplicate = false;
    for (const auto& e : epoch.entries) {
      duplicate = duplicate || e.anchor_id == r.anchor_id;
    }
    if (duplicate) continue;
    const AnchorState* anchor = nullptr;
    for (const auto& a : state.anchors) {
      if (a.id == r.anchor_id) anchor = &a;
    }
    if (!anchor) continue;
    UwbEpochEntry e;
    e.anchor_id = r.anchor_id;
    e.raw = r.range;
    e.corrected = correct_range(r.range, anchor->scale, anchor->bias);
    epoch.entries.push_back(e);
  }
  return epoch;
}

// Pure timestamp grouping of a whole stream into per-cycle batches (used by
// the batch pipeline so each epoch is processed at its own timestamp).
inline std::vector<std::vector<RangeMeasurement>> group_ranging_cycles(
    const std::vector<RangeMeasurement>& stream, double window) {
  std::vector<std::vector<RangeMeasurement>> out;
  for (const RangeMeasurement& r : stream) {
    if (out.empty() || r.t > out.back().front().t + window) {
      out.emplace_back();
    }
    out.back().push_back(r);
  }
  return out;
}

// One range row. Residual r = raw - (s * |u| + b) with u the tag-to-anchor
// offset through the epoch's clone pose; stored Jacobian is -dr/dx so the row
// follows the residual ~= H dx + noise convention. Returns false (row
// untouched) when the tag sits on the anchor and the direction is undefined.
inline bool uwb_residual_row(const UwbEpochEntry& entry, const UwbEpoch& epoch,
                             const FilterState& state,
                             const TagExtrinsics& tag, double noise_std,
                             Eigen::VectorXd& residual, Eigen::MatrixXd& H,
                             Eigen::VectorXd& noise_var, int row) {
  const StateLayout l = state.layout();
  const int j = FilterState::find_clone(state.uwb_clones, epoch.clone_id);
  if (j < 0) throw std::runtime_error("uwb_residual_row: stale clone id");
  int ai = -1;
  for (size_t i = 0; i < state.anchors.size(); ++i) {
    if (state.anchors[i].id == entry.anchor_id) ai = static_cast<int>(i);
  }
  if (ai < 0) throw std::runtime_error("uwb_residual_row: unknown anchor id");

  const Pose& c = state.uwb_clones[j].pose;
  const AnchorState& anchor = state.anchors[ai];
  const Vec3 u = c.p + c.R * tag.lever_arm - anchor.position;
  const double dist = u.norm();
  if (dist < 1e-6) return false;
  const Eigen::RowVector3d ut = (u / dist).transpose();

  residual(row) = entry.raw - (anchor.scale * dist + anchor.bias);
  noise_var(row) = noise_std * noise_std;

  H.row(row).setZero();
  // -dr/d(dtheta_j): r depends on dist; d(u)/d(dtheta) = -R [lever]x.
  H.block<1, 3>(row, l.uwb_clone(j)) =
      -anchor.scale * ut * c.R * skew(tag.lever_arm);
  H.block<1, 3>(row, l.uwb_clone(j) + 3) = anchor.scale * ut;
  H(row, l.scale(ai)) = dist;
  H(row, l.bias(ai)) = 1.0;
  return true;
}

}  // namespace ulins
