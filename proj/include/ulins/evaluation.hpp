#pragma once

// Trajectory accuracy metrics: horizontal and 3-D position RMSE plus the
// positioning-error CDF, evaluated against interpolated ground truth in the
// shared world frame (no alignment step: absolute drift is the quantity
// under study).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulins/geometry.hpp"
#include "ulins/simulator.hpp"

namespace ulins {

struct TimedPose {
  double t = 0.0;
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
};

using TrajectoryEstimate = std::vector<TimedPose>;

// Ground truth at an arbitrary time inside the sampled span: linear in
// position and velocity, geodesic in attitude.
inline GroundTruthSample interpolate_truth(
    const std::vector<GroundTruthSample>& truth, double t) {
  if (truth.empty()) throw std::runtime_error("interpolate_truth: no truth");
  if (t < truth.front().t - 1e-9 || t > truth.back().t + 1e-9) {
    throw std::runtime_error("interpolate_truth: time outside support");
  }
  const auto it = std::lower_bound(
      truth.begin(), truth.end(), t,
      [](const GroundTruthSample& s, double tt) { return s.t < tt; });
  if (it == truth.begin()) return truth.front();
  if (it == truth.end()) return truth.back();
  const GroundTruthSample& b = *it;
  const GroundTruthSample& a = *(it - 1);
  const double span = b.t - a.t;
  const double w = span > 0 ? (t - a.t) / span : 0.0;
  GroundTruthSample out;
  out.t = t;
  out.p = (1 - w) * a.p + w * b.p;
  out.v = (1 - w) * a.v + w * b.v;
  out.R = a.R * exp_so3(w * log_so3(a.R.transpose() * b.R));
  return out;
}

// Per-sample position error vectors, pairing each estimate with truth at its
// own timestamp. Estimates outside the truth span are skipped; an empty
// overlap is an error.
inline std::vector<Vec3> position_errors(
    const TrajectoryEstimate& estimate,
    const std::vector<GroundTruthSample>& truth) {
  std::vector<Vec3> errors;
  for (const TimedPose& e : estimate) {
    if (truth.empty() || e.t < truth.front().t - 1e-9 ||
        e.t > truth.back().t + 1e-9) {
      continue;
    }
    errors.push_back(e.p - interpolate_truth(truth, e.t).p);
  }
  if (errors.empty()) {
    throw std::runtime_error("position_errors: no temporal overlap");
  }
  return errors;
}

inline double rmse_3d(const TrajectoryEstimate& estimate,
                      const std::vector<GroundTruthSample>& truth) {
  const auto errors = position_errors(estimate, truth);
  double acc = 0;
  for (const Vec3& e : errors) acc += e.squaredNorm();
  return std::sqrt(acc / static_cast<double>(errors.size()));
}

inline double rmse_2d(const TrajectoryEstimate& estimate,
                      const std::vector<GroundTruthSample>& truth) {
  const auto errors = position_errors(estimate, truth);
  double acc = 0;
  for (const Vec3& e : errors) acc += e.head<2>().squaredNorm();
  return std::sqrt(acc / static_cast<double>(errors.size()));
}

// Fraction of epochs with 3-D error at or below each level.
inline std::vector<double> error_cdf(
    const TrajectoryEstimate& estimate,
    const std::vector<GroundTruthSample>& truth,
    const std::vector<double>& levels) {
  const auto errors = position_errors(estimate, truth);
  std::vector<double> cdf;
  cdf.reserve(levels.size());
  for (double level : levels) {
    int below = 0;
    for (const Vec3& e : errors) {
      if (e.norm() <= level) ++below;
    }
    cdf.push_back(static_cast<double>(below) /
                  static_cast<double>(errors.size()));
  }
  return cdf;
}

struct MetricsReport {
  std::string label;
  double rmse_2d = 0, rmse_3d = 0;
  double mean_error = 0, max_error = 0;
  std::vector<double> cdf_levels, cdf_values;
  int samples = 0;
};

inline std::vector<double> default_cdf_levels() {
  return {0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0, 2.0};
}

inline MetricsReport make_report(const std::string& label,
                                 const TrajectoryEstimate& estimate,
                                 const std::vector<GroundTruthSample>& truth,
                                 std::vector<double> levels = {}) {
  if (levels.empty()) levels = default_cdf_levels();
  std::sort(levels.begin(), levels.end());
  MetricsReport r;
  r.label = label;
  const auto errors = position_errors(estimate, truth);
  r.samples = static_cast<int>(errors.size());
  double acc2 = 0, acc3 = 0;
  for (const Vec3& e : errors) {
    acc2 += e.head<2>().squaredNorm();
    acc3 += e.squaredNorm();
    r.mean_error += e.norm();
    r.max_error = std::max(r.max_error, e.norm());
  }
  r.rmse_2d = std::sqrt(acc2 / r.samples);
  r.rmse_3d = std::sqrt(acc3 / r.samples);
  r.mean_error /= r.samples;
  r.cdf_levels = levels;
  if (levels.empty() || levels.back() < r.max_error) {
    r.cdf_levels.push_back(r.max_error);  // so the reported CDF ends at 1
  }
  r.cdf_values = error_cdf(estimate, truth, r.cdf_levels);
  for (size_t i = 1; i < r.cdf_values.size(); ++i) {
    if (r.cdf_values[i] + 1e-12 < r.cdf_values[i - 1]) {
      throw std::logic_error("make_report: CDF not monotone");
    }
  }
  return r;
}

}  // namespace ulins
