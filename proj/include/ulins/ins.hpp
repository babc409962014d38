#pragma once

// Strapdown INS mechanization and the nav-block error dynamics used by the
// covariance propagation.

#include <stdexcept>

#include "ulins/geometry.hpp"

namespace ulins {

struct ImuSample {
  double t = 0.0;               // s
  Vec3 gyro = Vec3::Zero();     // rad/s, body frame
  Vec3 accel = Vec3::Zero();    // m/s^2 specific force, body frame
};

struct NavState {
  Mat3 R = Mat3::Identity();    // body -> world
  Vec3 p = Vec3::Zero();        // m, world
  Vec3 v = Vec3::Zero();        // m/s, world
  Vec3 bg = Vec3::Zero();       // rad/s
  Vec3 ba = Vec3::Zero();       // m/s^2
};

struct ImuNoiseModel {
  double gyro_noise_density = 2e-4;   // rad/s/sqrt(Hz)
  double accel_noise_density = 2e-3;  // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-6;       // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 5e-5;      // m/s^3/sqrt(Hz)
  double gravity_magnitude = 9.80665; // m/s^2

  Vec3 gravity() const { return Vec3(0.0, 0.0, -gravity_magnitude); }
};

// One zero-order-hold integration step. The sample is treated as the average
// rate over [t, t+dt]; the specific force is rotated at the half-step attitude
// so the integral is second-order accurate without leaving the ZOH model.
inline NavState mechanize(const NavState& s, const ImuSample& m, double dt,
                          const Vec3& gravity) {
  if (!(dt > 0.0) || !m.gyro.allFinite() || !m.accel.allFinite()) {
    throw std::invalid_argument("mechanize: non-finite input or dt <= 0");
  }
  const Vec3 w = m.gyro - s.bg;
  const Vec3 f = m.accel - s.ba;
  const Vec3 a_w = s.R * exp_so3(0.5 * dt * w) * f + gravity;

  NavState out = s;
  out.R = s.R * exp_so3(dt * w);
  out.p = s.p + s.v * dt + 0.5 * a_w * dt * dt;
  out.v = s.v + a_w * dt;
  return out;
}

// Continuous-time error dynamics of the 15-dim nav block,
// d[dtheta dp dv dbg dba]/dt = F * [...] + noise, right-perturbation attitude.
inline Eigen::Matrix<double, 15, 15> nav_error_f(const NavState& s,
                                                 const ImuSample& m) {
  Eigen::Matrix<double, 15, 15> F = Eigen::Matrix<double, 15, 15>::Zero();
  const Vec3 w = m.gyro - s.bg;
  const Vec3 f = m.accel - s.ba;
  F.block<3, 3>(0, 0) = -skew(w);
  F.block<3, 3>(0, 9) = -Mat3::Identity();
  F.block<3, 3>(3, 6) = Mat3::Identity();
  F.block<3, 3>(6, 0) = -s.R * skew(f);
  F.block<3, 3>(6, 12) = -s.R;
  return F;
}

}  // namespace ulins
