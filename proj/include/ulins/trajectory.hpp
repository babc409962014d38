#pragma once

// Analytic ground-truth trajectories for the simulator. Each model returns
// position/velocity/acceleration plus the attitude and body rates, so IMU
// streams can be generated by inverse mechanization without numeric
// differentiation. Attitude is yaw-only (ground robot): either fixed or
// following the velocity direction.

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ulins/geometry.hpp"

namespace ulins {

struct TrajectorySample {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Mat3 R = Mat3::Identity();      // body -> world
  Vec3 omega = Vec3::Zero();      // body frame angular rate
};

namespace detail {

inline Mat3 yaw_rotation(double psi) {
  Mat3 R;
  const double c = std::cos(psi), s = std::sin(psi);
  R << c, -s, 0, s, c, 0, 0, 0, 1;
  return R;
}

// Fill attitude/rates for velocity-following yaw; fixed yaw when follow=false.
inline void set_attitude(TrajectorySample& out, bool follow, double fixed_yaw) {
  if (!follow) {
    out.R = yaw_rotation(fixed_yaw);
    out.omega = Vec3::Zero();
    return;
  }
  const double sp2 = out.v.x() * out.v.x() + out.v.y() * out.v.y();
  if (sp2 < 1e-12) {
    throw std::runtime_error(
        "trajectory: velocity-following yaw undefined at zero planar speed");
  }
  const double psi = std::atan2(out.v.y(), out.v.x());
  const double psi_dot = (out.v.x() * out.a.y() - out.v.y() * out.a.x()) / sp2;
  out.R = yaw_rotation(psi);
  out.omega = Vec3(0, 0, psi_dot);
}

}  // namespace detail

class Trajectory {
 public:
  virtual ~Trajectory() = default;
  virtual TrajectorySample at(double t) const = 0;
};

// Sinusoidal oscillation along a fixed direction with fixed yaw.
class LineTrajectory : public Trajectory {
 public:
  LineTrajectory(const Vec3& origin, const Vec3& direction, double amplitude,
                 double omega, double yaw)
      : origin_(origin), dir_(direction.normalized()), amp_(amplitude),
        w_(omega), yaw_(yaw) {}

  TrajectorySample at(double t) const override {
    TrajectorySample s;
    s.p = origin_ + dir_ * (amp_ * std::sin(w_ * t));
    s.v = dir_ * (amp_ * w_ * std::cos(w_ * t));
    s.a = dir_ * (-amp_ * w_ * w_ * std::sin(w_ * t));
    detail::set_attitude(s, false, yaw_);
    return s;
  }

 private:
  Vec3 origin_, dir_;
  double amp_, w_, yaw_;
};

class CircleTrajectory : public Trajectory {
 public:
  CircleTrajectory(const Vec3& center, double radius, double rate,
                   double phase = 0.0)
      : center_(center), r_(radius), w_(rate), phase_(phase) {}

  TrajectorySample at(double t) const override {
    const double u = w_ * t + phase_;
    TrajectorySample s;
    s.p = center_ + Vec3(r_ * std::cos(u), r_ * std::sin(u), 0);
    s.v = Vec3(-r_ * w_ * std::sin(u), r_ * w_ * std::cos(u), 0);
    s.a = Vec3(-r_ * w_ * w_ * std::cos(u), -r_ * w_ * w_ * std::sin(u), 0);
    detail::set_attitude(s, true, 0.0);
    return s;
  }

 private:
  Vec3 center_;
  double r_, w_, phase_;
};

// Gerono figure-eight: (Ax sin u, Ay sin u cos u, Az sin u). Planar speed
// never vanishes, so velocity-following yaw is well defined everywhere.
class FigureEightTrajectory : public Trajectory {
 public:
  FigureEightTrajectory(const Vec3& center, double ax, double ay, double omega,
                        double az = 0.0, double phase = 0.0)
      : center_(center), ax_(ax), ay_(ay), az_(az), w_(omega), phase_(phase) {}

  TrajectorySample at(double t) const override {
    const double u = w_ * t + phase_;
    TrajectorySample s;
    s.p = center_ + Vec3(ax_ * std::sin(u), 0.5 * ay_ * std::sin(2 * u),
                         az_ * std::sin(u));
    s.v = Vec3(ax_ * w_ * std::cos(u), ay_ * w_ * std::cos(2 * u),
               az_ * w_ * std::cos(u));
    s.a = Vec3(-ax_ * w_ * w_ * std::sin(u), -2 * ay_ * w_ * w_ * std::sin(2 * u),
               -az_ * w_ * w_ * std::sin(u));
    detail::set_attitude(s, true, 0.0);
    return s;
  }

 private:
  Vec3 center_;
  double ax_, ay_, az_, w_, phase_;
};

// C2 quintic Hermite through timed waypoints. Knot velocities/accelerations
// come from central differences, ends use one-sided differences.
class WaypointTrajectory : public Trajectory {
 public:
  WaypointTrajectory(std::vector<double> times, std::vector<Vec3> points,
                     bool follow_yaw = true, double fixed_yaw = 0.0)
      : t_(std::move(times)), p_(std::move(points)), follow_(follow_yaw),
        yaw_(fixed_yaw) {
    if (t_.size() != p_.size() || t_.size() < 2) {
      throw std::invalid_argument("waypoints: need matching times and >= 2");
    }
    for (size_t i = 1; i < t_.size(); ++i) {
      if (t_[i] <= t_[i - 1]) {
        throw std::invalid_argument("waypoints: times must increase");
      }
    }
    const size_t n = t_.size();
    v_.resize(n);
    a_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const size_t lo = i == 0 ? 0 : i - 1;
      const size_t hi = i + 1 == n ? i : i + 1;
      v_[i] = (p_[hi] - p_[lo]) / (t_[hi] - t_[lo]);
    }
    for (size_t i = 0; i < n; ++i) {
      const size_t lo = i == 0 ? 0 : i - 1;
      const size_t hi = i + 1 == n ? i : i + 1;
      a_[i] = (v_[hi] - v_[lo]) / (t_[hi] - t_[lo]);
    }
  }

  TrajectorySample at(double t) const override {
    const double tc = std::clamp(t, t_.front(), t_.back());
    const size_t seg =
        std::min(static_cast<size_t>(
                     std::upper_bound(t_.begin(), t_.end(), tc) - t_.begin()),
                 t_.size() - 1) - 1;
    const double h = t_[seg + 1] - t_[seg];
    const double s = (tc - t_[seg]) / h;

    // Quintic Hermite basis for (p0, v0, a0, p1, v1, a1).
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double b0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
    const double b1 = s - 6 * s3 + 8 * s4 - 3 * s5;
    const double b2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    const double b3 = 10 * s3 - 15 * s4 + 6 * s5;
    const double b4 = -4 * s3 + 7 * s4 - 3 * s5;
    const double b5 = 0.5 * s3 - s4 + 0.5 * s5;
    const double d0 = (-30 * s2 + 60 * s3 - 30 * s4) / h;
    const double d1 = (1 - 18 * s2 + 32 * s3 - 15 * s4) / h;
    const double d2 = (s - 4.5 * s2 + 6 * s3 - 2.5 * s4) / h;
    const double d3 = (30 * s2 - 60 * s3 + 30 * s4) / h;
    const double d4 = (-12 * s2 + 28 * s3 - 15 * s4) / h;
    const double d5 = (1.5 * s2 - 4 * s3 + 2.5 * s4) / h;
    const double e0 = (-60 * s + 180 * s2 - 120 * s3) / (h * h);
    const double e1 = (-36 * s + 96 * s2 - 60 * s3) / (h * h);
    const double e2 = (1 - 9 * s + 18 * s2 - 10 * s3) / (h * h);
    const double e3 = (60 * s - 180 * s2 + 120 * s3) / (h * h);
    const double e4 = (-24 * s + 84 * s2 - 60 * s3) / (h * h);
    const double e5 = (3 * s - 12 * s2 + 10 * s3) / (h * h);

    const Vec3 P0 = p_[seg], P1 = p_[seg + 1];
    const Vec3 V0 = v_[seg] * h, V1 = v_[seg + 1] * h;
    const Vec3 A0 = a_[seg] * h * h, A1 = a_[seg + 1] * h * h;

    TrajectorySample out;
    out.p = b0 * P0 + b1 * V0 + b2 * A0 + b3 * P1 + b4 * V1 + b5 * A1;
    out.v = d0 * P0 + d1 * V0 + d2 * A0 + d3 * P1 + d4 * V1 + d5 * A1;
    out.a = e0 * P0 + e1 * V0 + e2 * A0 + e3 * P1 + e4 * V1 + e5 * A1;
    if (t < t_.front() || t > t_.back()) {  // hold pose outside the support
      out.v.setZero();
      out.a.setZero();
      out.R = detail::yaw_rotation(yaw_);
      out.omega.setZero();
      return out;
    }
    detail::set_attitude(out, follow_, yaw_);
    return out;
  }

 private:
  std::vector<double> t_;
  std::vector<Vec3> p_;
  std::vector<Vec3> v_, a_;
  bool follow_;
  double yaw_;
};

}  // namespace ulins
