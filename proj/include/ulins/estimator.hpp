#pragma once

// The tightly-coupled estimator: IMU propagation, frame-to-frame LiDAR
// updates over a keyframe window, and per-epoch UWB updates with either
// single-epoch chi-square gating or multi-epoch RANSAC outlier rejection.
// Variants toggle the sensor pipelines and the online range-error model.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulins/ins.hpp"
#include "ulins/lidar.hpp"
#include "ulins/msckf.hpp"
#include "ulins/outlier_rejection.hpp"
#include "ulins/uwb.hpp"

namespace ulins {

enum class Variant { kTcLio, kUins, kUlins, kUlinsOe, kUlinsMor, kMrUlins };

struct VariantTraits {
  bool lidar = true;
  bool uwb = true;
  bool online_error_model = true;    // scale/bias states active
  bool multi_epoch_rejection = true; // RANSAC path instead of chi-square only
};

inline VariantTraits variant_traits(Variant v) {
  switch (v) {
    case Variant::kTcLio:    return {true, false, false, false};
    case Variant::kUins:     return {false, true, false, false};
    case Variant::kUlins:    return {true, true, false, false};
    case Variant::kUlinsOe:  return {true, true, true, false};
    case Variant::kUlinsMor: return {true, true, false, true};
    case Variant::kMrUlins:  return {true, true, true, true};
  }
  return {};
}

inline const char* variant_label(Variant v) {
  switch (v) {
    case Variant::kTcLio:    return "TC-LIO";
    case Variant::kUins:     return "UINS";
    case Variant::kUlins:    return "ULINS";
    case Variant::kUlinsOe:  return "ULINS-OE";
    case Variant::kUlinsMor: return "ULINS-MOR";
    case Variant::kMrUlins:  return "MR-ULINS";
  }
  return "?";
}

inline const char* variant_flag(Variant v) {
  switch (v) {
    case Variant::kTcLio:    return "tc-lio";
    case Variant::kUins:     return "uins";
    case Variant::kUlins:    return "ulins";
    case Variant::kUlinsOe:  return "ulins-oe";
    case Variant::kUlinsMor: return "ulins-mor";
    case Variant::kMrUlins:  return "mr-ulins";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(const std::string& s) {
  for (Variant v : {Variant::kTcLio, Variant::kUins, Variant::kUlins,
                    Variant::kUlinsOe, Variant::kUlinsMor,
                    Variant::kMrUlins}) {
    if (s == variant_flag(v)) return v;
  }
  return std::nullopt;
}

struct InitialUncertainty {
  double att_std = 0.01;      // rad
  double pos_std = 0.01;      // m
  double vel_std = 0.05;      // m/s
  double gyro_bias_std = 0.005;
  double accel_bias_std = 0.05;
  double ext_att_std = 1e-3;  // LiDAR extrinsics
  double ext_pos_std = 1e-3;
};

struct EstimatorConfig {
  Variant variant = Variant::kMrUlins;
  int lidar_window = 20;  // N keyframe clones
  int uwb_window = 20;    // M epoch clones

  ImuNoiseModel imu_noise;
  InitialUncertainty init;

  // Estimator-side LiDAR tuning. The per-row sigma is deliberately much larger
  // than the per-point sensor noise: the point-to-plane residual also carries
  // the 5-NN plane-fit error, and rows sharing a plane patch (or a keyframe)
  // are correlated, so treating them as independent at the raw sensor sigma
  // collapses the covariance far too fast and destabilizes the bias states.
  // Same reasoning caps the rows per update and the association targets.
  LidarConfig lidar = [] {
    LidarConfig c;
    c.noise_std = 0.3;
    c.max_target_keyframes = 4;
    return c;
  }();
  int max_lidar_rows = 100;  // row cap per frame update

  TagExtrinsics tag;
  double uwb_noise_std = 0.03;   // m
  double epoch_window = 0.1;     // s, half the nominal ranging period
  double chi2_confidence = 0.95;

  // Online range-error model (active only for the *-OE / MR variants).
  double scale_prior_std = 0.05;
  double bias_prior_std = 0.3;         // m
  double scale_walk_psd = 1e-9;        // 1/s
  double bias_walk_psd = 1e-7;         // m^2/s

  LmConfig lm;
  RansacConfig ransac;
  double min_secondary_span = 0.5;  // m, rejection-window geometry guard
  std::uint64_t rejection_seed = 1; // independent of any simulator stream
};

// Wall time spent inside each pipeline stage.
struct StageTimes {
  double seconds = 0.0;
  long invocations = 0;
  double mean_ms() const {
    return invocations ? 1e3 * seconds / static_cast<double>(invocations)
                       : 0.0;
  }
};

struct TimingProfile {
  StageTimes propagation;        // forward propagation
  StageTimes lidar_update;       // LiDAR update
  StageTimes outlier_rejection;  // outlier rejection
  StageTimes uwb_update;         // UWB update
};

class Estimator {
 public:
  Estimator(const EstimatorConfig& cfg, std::vector<AnchorState> anchors,
            const NavState& initial_nav, const Pose& lidar_extrinsics,
            double start_time)
      : cfg_(cfg), traits_(variant_traits(cfg.variant)) {
    state_.time = start_time;
    state_.nav = initial_nav;
    state_.extrinsics = lidar_extrinsics;
    state_.anchors = std::move(anchors);
    for (AnchorState& a : state_.anchors) {
      a.scale = 1.0;
      a.bias = 0.0;
    }

    const StateLayout l = state_.layout();
    Eigen::VectorXd d = Eigen::VectorXd::Zero(l.dim());
    const InitialUncertainty& u = cfg_.init;
    d.segment<3>(StateLayout::kAttitude).setConstant(u.att_std * u.att_std);
    d.segment<3>(StateLayout::kPosition).setConstant(u.pos_std * u.pos_std);
    d.segment<3>(StateLayout::kVelocity).setConstant(u.vel_std * u.vel_std);
    d.segment<3>(StateLayout::kGyroBias)
        .setConstant(u.gyro_bias_std * u.gyro_bias_std);
    d.segment<3>(StateLayout::kAccelBias)
        .setConstant(u.accel_bias_std * u.accel_bias_std);
    d.segment<3>(StateLayout::kExtRot)
        .setConstant(u.ext_att_std * u.ext_att_std);
    d.segment<3>(StateLayout::kExtPos)
        .setConstant(u.ext_pos_std * u.ext_pos_std);
    if (traits_.online_error_model) {
      for (int i = 0; i < l.num_anchors; ++i) {
        d(l.scale(i)) = cfg_.scale_prior_std * cfg_.scale_prior_std;
        d(l.bias(i)) = cfg_.bias_prior_std * cfg_.bias_prior_std;
      }
    }  // else zero prior: scale/bias frozen at 1 and 0
    state_.P = d.asDiagonal();

    process_noise_.imu = cfg_.imu_noise;
    if (traits_.online_error_model) {
      process_noise_.uwb_scale_walk_psd = cfg_.scale_walk_psd;
      process_noise_.uwb_bias_walk_psd = cfg_.bias_walk_psd;
    }
  }

  // Called once after construction to observe every covariance-shaping
  // operation; stage is one of propagate/augment/marginalize/update.
  std::function<void(const FilterState&, const char*)> hygiene_hook;

  void process_imu(const ImuSample& m) {
    const double dt = m.t - state_.time;
    if (dt < -1e-9) throw std::runtime_error("process_imu: time went back");
    if (dt <= 0) return;
    const Tic tic(timing_.propagation);
    propagate(state_, m, dt, process_noise_);
    state_.time = m.t;  // propagate advances by dt; pin to the sample stamp exactly
    hook("propagate");
  }

  void process_lidar(const PointCloud& frame) {
    if (!traits_.lidar) return;
    const Tic tic(timing_.lidar_update);

    LidarKeyframe current;
    current.timestamp = frame.timestamp;
    current.cloud = frame.points;

    if (!keyframes_.empty()) {
      const auto assocs = associate(current, keyframes_, state_, cfg_.lidar);
      if (!assocs.empty()) {
        const LinearizedMeasurement meas =
            lidar_measurement(assocs, state_, cfg_.lidar, cfg_.max_lidar_rows);
        if (eskf_update(state_, meas)) lidar_rows_ += meas.rows();
        hook("update");
      }
    }

    bool promote = keyframes_.empty();
    if (!promote) {
      const CloneState* last = nullptr;
      for (const CloneState& c : state_.lidar_clones) {
        if (c.id == keyframes_.back().clone_id) last = &c;
      }
      promote = last == nullptr ||
                select_keyframe(Pose(state_.nav.R, state_.nav.p), last->pose,
                                frame.timestamp - keyframes_.back().timestamp,
                                cfg_.lidar.keyframe);
    }
    if (!promote) return;

    if (static_cast<int>(state_.lidar_clones.size()) >= cfg_.lidar_window) {
      marginalize_oldest(state_, CloneKind::kLidar);
      keyframes_.erase(keyframes_.begin());
      hook("marginalize");
    }
    current.clone_id =
        augment_clone(state_, CloneKind::kLidar, frame.timestamp,
                      cfg_.lidar_window);
    hook("augment");
    current.finalize();
    keyframes_.push_back(std::move(current));
  }

  // One ranging cycle (the runner groups the raw stream by timestamp).
  void process_uwb(const std::vector<RangeMeasurement>& cycle) {
    if (!traits_.uwb || cycle.empty()) return;
    UwbEpoch epoch = build_uwb_epoch(cycle, state_, cfg_.epoch_window);
    if (epoch.entries.empty()) return;

    if (static_cast<int>(state_.uwb_clones.size()) >= cfg_.uwb_window) {
      marginalize_oldest(state_, CloneKind::kUwb);
      epochs_.erase(epochs_.begin());
      hook("marginalize");
    }
    epoch.clone_id = augment_clone(state_, CloneKind::kUwb, epoch.timestamp,
                                   cfg_.uwb_window);
    hook("augment");
    epochs_.push_back(std::move(epoch));
    ++epoch_count_;

    // (epoch index, entry index) pairs that become rows of this update.
    std::vector<std::pair<int, int>> rows;
    if (traits_.multi_epoch_rejection) {
      const Tic tic(timing_.outlier_rejection);
      for (size_t a = 0; a < state_.anchors.size(); ++a) {
        classify_anchor_window(static_cast<int>(a), rows);
      }
    } else {
      chi_square_current_epoch(-1, rows);
    }
    update_with(rows);
  }

  const FilterState& state() const { return state_; }
  const EstimatorConfig& config() const { return cfg_; }
  const std::vector<LidarKeyframe>& keyframes() const { return keyframes_; }
  const std::vector<UwbEpoch>& epochs() const { return epochs_; }
  const TimingProfile& timing() const { return timing_; }
  const std::vector<RansacDiagnostic>& diagnostics() const {
    return diagnostics_;
  }
  long lidar_rows_used() const { return lidar_rows_; }
  long uwb_rows_used() const { return uwb_rows_; }
  long ranges_rejected() const { return ranges_rejected_; }

 private:
  struct Tic {
    StageTimes& stage;
    std::chrono::steady_clock::time_point t0;
    explicit Tic(StageTimes& s)
        : stage(s), t0(std::chrono::steady_clock::now()) {}
    ~Tic() {
      stage.seconds += std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      ++stage.invocations;
    }
  };

  void hook(const char* stage) {
    if (hygiene_hook) hygiene_hook(state_, stage);
  }

  const AnchorState& anchor_by_id(int id) const {
    for (const AnchorState& a : state_.anchors) {
      if (a.id == id) return a;
    }
    throw std::runtime_error("estimator: unknown anchor id");
  }

  Vec3 tag_world(const UwbEpoch& e) const {
    const int j = FilterState::find_clone(state_.uwb_clones, e.clone_id);
    const Pose& c = state_.uwb_clones[j].pose;
    return c.p + c.R * cfg_.tag.lever_arm;
  }

  // Single-epoch chi-square gating over the newest epoch. anchor_filter < 0
  // gates every anchor (the non-MOR path); otherwise only that anchor's
  // entries (MOR fallback when window geometry is degenerate). All touched
  // entries are consumed, accepted or not: they are never revisited.
  void chi_square_current_epoch(int anchor_filter,
                                std::vector<std::pair<int, int>>& rows) {
    const int ei = static_cast<int>(epochs_.size()) - 1;
    UwbEpoch& epoch = epochs_.back();
    const StateLayout l = state_.layout();
    for (size_t k = 0; k < epoch.entries.size(); ++k) {
      UwbEpochEntry& entry = epoch.entries[k];
      if (entry.consumed) continue;
      if (anchor_filter >= 0 && entry.anchor_id != anchor_filter) continue;
      entry.consumed = true;
      LinearizedMeasurement meas;
      meas.residual.resize(1);
      meas.H.resize(1, l.dim());
      meas.noise_var.resize(1);
      if (!uwb_residual_row(entry, epoch, state_, cfg_.tag,
                            cfg_.uwb_noise_std, meas.residual, meas.H,
                            meas.noise_var, 0)) {
        continue;
      }
      if (chi_square_gate(meas, state_, cfg_.chi2_confidence)[0]) {
        rows.emplace_back(ei, static_cast<int>(k));
      } else {
        ++ranges_rejected_;
      }
    }
  }

  // Multi-epoch RANSAC over one anchor's window of unconsumed-or-consumed
  // ranges; rows are emitted for inliers that have not yet been used.
  // Outlier-classified ranges stay unconsumed, so a later window can
  // rehabilitate them.
  void classify_anchor_window(int ai,
                              std::vector<std::pair<int, int>>& rows) {
    const AnchorState& anchor = state_.anchors[ai];
    RangeWindow w{anchor.id, {}};
    for (size_t ei = 0; ei < epochs_.size(); ++ei) {
      const UwbEpoch& e = epochs_[ei];
      for (size_t k = 0; k < e.entries.size(); ++k) {
        if (e.entries[k].anchor_id != anchor.id) continue;
        RangeObservation o;
        o.corrected =
            correct_range(e.entries[k].raw, anchor.scale, anchor.bias);
        o.tag_position = tag_world(e);
        o.epoch_index = static_cast<int>(ei);
        o.entry_index = static_cast<int>(k);
        w.obs.push_back(o);
      }
    }
    if (static_cast<int>(w.obs.size()) < cfg_.ransac.sample_size) {
      return;  // insufficient window; ranges wait for more epochs
    }
    if (window_geometry_degenerate(w, cfg_.min_secondary_span)) {
      // Too little pose spread to fix an anchor hypothesis: fall back to
      // the single-epoch gate so a stationary platform still gets updates.
      chi_square_current_epoch(anchor.id, rows);
      return;
    }

    Rng rng(derive_seed(cfg_.rejection_seed,
                        static_cast<std::uint64_t>(anchor.id), epoch_count_));
    const RansacResult res = ransac_reject(w, cfg_.ransac, cfg_.lm, rng);

    RansacDiagnostic diag;
    diag.t = state_.time;
    diag.anchor_id = anchor.id;
    diag.window_size = static_cast<int>(w.obs.size());
    if (res.status == RansacResult::kOk) {
      diag.inliers = static_cast<int>(res.inliers.size());
      diag.position = res.position;
      diag.residual_sum = res.error_sum;
      ranges_rejected_ +=
          static_cast<long>(w.obs.size() - res.inliers.size());
      for (int idx : res.inliers) {
        const RangeObservation& o = w.obs[idx];
        if (!epochs_[o.epoch_index].entries[o.entry_index].consumed) {
          rows.emplace_back(o.epoch_index, o.entry_index);
        }
      }
    }
    diagnostics_.push_back(diag);
  }

  // One stacked ESKF update from the collected (epoch, entry) rows; entries
  // are marked consumed only if the update is applied.
  void update_with(const std::vector<std::pair<int, int>>& rows) {
    if (rows.empty()) return;
    const Tic tic(timing_.uwb_update);
    const StateLayout l = state_.layout();
    LinearizedMeasurement meas;
    meas.residual.resize(static_cast<int>(rows.size()));
    meas.H.resize(static_cast<int>(rows.size()), l.dim());
    meas.noise_var.resize(static_cast<int>(rows.size()));
    int m = 0;
    std::vector<std::pair<int, int>> used;
    for (const auto& [ei, k] : rows) {
      if (uwb_residual_row(epochs_[ei].entries[k], epochs_[ei], state_,
                           cfg_.tag, cfg_.uwb_noise_std, meas.residual,
                           meas.H, meas.noise_var, m)) {
        used.emplace_back(ei, k);
        ++m;
      }
    }
    if (m == 0) return;
    meas.residual.conservativeResize(m);
    meas.H.conservativeResize(m, l.dim());
    meas.noise_var.conservativeResize(m);
    if (eskf_update(state_, meas)) {
      uwb_rows_ += m;
      for (const auto& [ei, k] : used) {
        epochs_[ei].entries[k].consumed = true;
      }
    }
    hook("update");
  }

  EstimatorConfig cfg_;
  VariantTraits traits_;
  FilterState state_;
  ProcessNoise process_noise_;
  std::vector<LidarKeyframe> keyframes_;  // parallel to state_.lidar_clones
  std::vector<UwbEpoch> epochs_;          // parallel to state_.uwb_clones
  std::uint64_t epoch_count_ = 0;
  TimingProfile timing_;
  std::vector<RansacDiagnostic> diagnostics_;
  long lidar_rows_ = 0;
  long uwb_rows_ = 0;
  long ranges_rejected_ = 0;
};

}  // namespace ulins
