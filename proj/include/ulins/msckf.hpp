#pragma once

// Sliding-window ESKF bookkeeping shared by both sensors: covariance
// propagation, clone augmentation/marginalization, the measurement update,
// and the single-epoch chi-squared gate.

#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "ulins/state.hpp"

namespace ulins {

// Rows follow the convention  residual ~= H * dx_true + noise,
// i.e. H is minus the derivative of the residual w.r.t. the state estimate.
// Rows are mutually uncorrelated; noise_var holds per-row variances.
struct LinearizedMeasurement {
  Eigen::VectorXd residual;
  Eigen::MatrixXd H;
  Eigen::VectorXd noise_var;

  int rows() const { return static_cast<int>(residual.size()); }
};

struct ProcessNoise {
  ImuNoiseModel imu;
  double uwb_scale_walk_psd = 0.0;  // 1/s, variance growth rate of each scale
  double uwb_bias_walk_psd = 0.0;   // m^2/s, variance growth rate of each bias
};

// One ESKF prediction step. Only the 15 nav rows/cols get a non-identity
// transition (first-order, Phi = I + F dt); clones and extrinsics are static,
// anchor scale/bias are random walks and only collect process noise.
inline void propagate(FilterState& s, const ImuSample& m, double dt,
                      const ProcessNoise& noise) {
  const StateLayout l = s.layout();
  if (s.P.rows() != l.dim() || s.P.cols() != l.dim()) {
    throw std::invalid_argument("propagate: covariance dimension mismatch");
  }
  const double asym = (s.P - s.P.transpose()).cwiseAbs().maxCoeff();
  const double min_diag = s.P.diagonal().minCoeff();
  if (asym > 1e-9 || min_diag < -1e-10) {
    throw std::runtime_error("propagate: covariance not symmetric PSD (asym " +
                             std::to_string(asym) + ", min diag " +
                             std::to_string(min_diag) + ")");
  }
  if (dt == 0.0) return;

  constexpr int kN = StateLayout::kNavDim;
  const Eigen::Matrix<double, kN, kN> Phi =
      Eigen::Matrix<double, kN, kN>::Identity() + nav_error_f(s.nav, m) * dt;

  s.nav = mechanize(s.nav, m, dt, noise.imu.gravity());
  s.time += dt;

  s.P.topRows(kN) = Phi * s.P.topRows(kN);
  s.P.leftCols(kN) = s.P.leftCols(kN) * Phi.transpose();

  const double g2 = noise.imu.gyro_noise_density * noise.imu.gyro_noise_density;
  const double a2 =
      noise.imu.accel_noise_density * noise.imu.accel_noise_density;
  const double bg2 = noise.imu.gyro_bias_walk * noise.imu.gyro_bias_walk;
  const double ba2 = noise.imu.accel_bias_walk * noise.imu.accel_bias_walk;
  for (int i = 0; i < 3; ++i) {
    s.P(StateLayout::kAttitude + i, StateLayout::kAttitude + i) += g2 * dt;
    s.P(StateLayout::kVelocity + i, StateLayout::kVelocity + i) += a2 * dt;
    s.P(StateLayout::kGyroBias + i, StateLayout::kGyroBias + i) += bg2 * dt;
    s.P(StateLayout::kAccelBias + i, StateLayout::kAccelBias + i) += ba2 * dt;
  }
  for (int i = 0; i < l.num_anchors; ++i) {
    s.P(l.scale(i), l.scale(i)) += noise.uwb_scale_walk_psd * dt;
    s.P(l.bias(i), l.bias(i)) += noise.uwb_bias_walk_psd * dt;
  }
  s.P = (0.5 * (s.P + s.P.transpose())).eval();
}

// Appends a pose clone (copy of the current IMU pose; extrinsics are applied
// later, at residual evaluation) and grows the covariance with the selector
// Jacobian, so the new block is an exact copy of the pose block. Returns the
// clone id.
inline long augment_clone(FilterState& s, CloneKind kind, double timestamp,
                          int max_window) {
  std::vector<CloneState>& window =
      (kind == CloneKind::kLidar) ? s.lidar_clones : s.uwb_clones;
  if (static_cast<int>(window.size()) >= max_window) {
    throw std::runtime_error("augment_clone: window full, marginalize first");
  }
  const StateLayout l = s.layout();
  const int n = l.dim();
  // Insertion offset: end of that kind's block.
  const int at = (kind == CloneKind::kLidar) ? l.lidar_clone(l.num_lidar)
                                             : l.uwb_clone(l.num_uwb);

  Eigen::MatrixXd JP(6, n);  // pose rows of P (attitude, then position)
  JP.topRows(3) = s.P.middleRows(StateLayout::kAttitude, 3);
  JP.bottomRows(3) = s.P.middleRows(StateLayout::kPosition, 3);

  Eigen::MatrixXd Pn(n + 6, n + 6);
  Pn.block(0, 0, at, at) = s.P.block(0, 0, at, at);
  Pn.block(0, at + 6, at, n - at) = s.P.block(0, at, at, n - at);
  Pn.block(at + 6, 0, n - at, at) = s.P.block(at, 0, n - at, at);
  Pn.block(at + 6, at + 6, n - at, n - at) = s.P.block(at, at, n - at, n - at);
  Pn.block(at, 0, 6, at) = JP.leftCols(at);
  Pn.block(at, at + 6, 6, n - at) = JP.rightCols(n - at);
  Pn.block(0, at, at, 6) = Pn.block(at, 0, 6, at).transpose();
  Pn.block(at + 6, at, n - at, 6) = Pn.block(at, at + 6, 6, n - at).transpose();
  Pn.block<3, 3>(at, at) = s.P.block<3, 3>(0, 0);
  Pn.block<3, 3>(at, at + 3) = s.P.block<3, 3>(0, 3);
  Pn.block<3, 3>(at + 3, at) = s.P.block<3, 3>(3, 0);
  Pn.block<3, 3>(at + 3, at + 3) = s.P.block<3, 3>(3, 3);
  s.P = std::move(Pn);

  CloneState c;
  c.id = s.next_clone_id++;
  c.timestamp = timestamp;
  c.pose = Pose(s.nav.R, s.nav.p);
  window.push_back(c);
  return c.id;
}

// Drops the oldest clone of a kind; remaining covariance entries are plain
// copies (no information projection).
inline void marginalize_oldest(FilterState& s, CloneKind kind) {
  std::vector<CloneState>& window =
      (kind == CloneKind::kLidar) ? s.lidar_clones : s.uwb_clones;
  if (window.empty()) {
    throw std::runtime_error("marginalize_oldest: empty clone window");
  }
  const StateLayout l = s.layout();
  const int n = l.dim();
  const int at = (kind == CloneKind::kLidar) ? l.lidar_clone(0) : l.uwb_clone(0);

  Eigen::MatrixXd Pn(n - 6, n - 6);
  Pn.block(0, 0, at, at) = s.P.block(0, 0, at, at);
  Pn.block(0, at, at, n - at - 6) = s.P.block(0, at + 6, at, n - at - 6);
  Pn.block(at, 0, n - at - 6, at) = s.P.block(at + 6, 0, n - at - 6, at);
  Pn.block(at, at, n - at - 6, n - at - 6) =
      s.P.block(at + 6, at + 6, n - at - 6, n - at - 6);
  s.P = std::move(Pn);
  window.erase(window.begin());
}

// Standard ESKF update with Joseph-form covariance. Returns false (state
// untouched) if the innovation covariance fails its Cholesky factorization.
inline bool eskf_update(FilterState& s, const LinearizedMeasurement& meas) {
  const int n = s.layout().dim();
  const int m = meas.rows();
  if (meas.H.rows() != m || meas.H.cols() != n || meas.noise_var.size() != m) {
    throw std::invalid_argument("eskf_update: dimension mismatch");
  }
  if (m == 0) return true;

  Eigen::MatrixXd HP = meas.H * s.P;           // m x n
  Eigen::MatrixXd S = HP * meas.H.transpose(); // m x m
  S.diagonal() += meas.noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return false;

  const Eigen::MatrixXd K = llt.solve(HP).transpose();  // n x m
  s.apply_correction(K * meas.residual);

  const Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(n, n) - K * meas.H;
  s.P = A * s.P * A.transpose() +
        K * meas.noise_var.asDiagonal() * K.transpose();
  s.P = (0.5 * (s.P + s.P.transpose())).eval();
  return true;
}

// chi^2(1 dof) quantile by bisection on erf; CDF(x) = erf(sqrt(x/2)).
inline double chi2_quantile_1dof(double confidence) {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erf(std::sqrt(0.5 * mid)) < confidence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Per-row gate: accept iff r^2 / (H P H^T + R) stays under the quantile.
inline std::vector<bool> chi_square_gate(const LinearizedMeasurement& meas,
                                         const FilterState& s,
                                         double confidence) {
  const double threshold = chi2_quantile_1dof(confidence);
  std::vector<bool> accept(meas.rows());
  for (int i = 0; i < meas.rows(); ++i) {
    const auto h = meas.H.row(i);
    const double si = h * s.P * h.transpose() + meas.noise_var(i);
    accept[i] = (meas.residual(i) * meas.residual(i) / si) < threshold;
  }
  return accept;
}

// Keeps only the masked rows of a measurement.
inline LinearizedMeasurement filter_rows(const LinearizedMeasurement& meas,
                                         const std::vector<bool>& keep) {
  int m = 0;
  for (bool k : keep) m += k ? 1 : 0;
  LinearizedMeasurement out;
  out.residual.resize(m);
  out.H.resize(m, meas.H.cols());
  out.noise_var.resize(m);
  int r = 0;
  for (int i = 0; i < meas.rows(); ++i) {
    if (!keep[i]) continue;
    out.residual(r) = meas.residual(i);
    out.H.row(r) = meas.H.row(i);
    out.noise_var(r) = meas.noise_var(i);
    ++r;
  }
  return out;
}

}  // namespace ulins
