#pragma once

// SO(3) / SE(3) primitives for the error-state filter.
// Attitude errors are right-perturbations throughout: R = R_hat * Exp(dtheta).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace ulins {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

// Rodrigues formula with a series branch below 1e-7 rad to avoid
// sin(t)/t cancellation.
inline Mat3 exp_so3(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 S = skew(theta);
  if (angle < 1e-7) {
    return Mat3::Identity() + S + 0.5 * S * S;
  }
  const double s = std::sin(angle) / angle;
  const double c = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + s * S + c * S * S;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

inline Vec3 log_so3(const Mat3& R) {
  const Vec3 w = 0.5 * vee(R - R.transpose());  // sin(angle) * axis
  const double s = w.norm();
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  // atan2 keeps the angle well-conditioned for any rotation, unlike acos.
  const double angle = std::atan2(s, c);
  if (angle < 1e-7) {
    return w;  // first-order: angle ~= sin(angle)
  }
  if (c > -0.999) {
    return (angle / s) * w;
  }
  // Close to pi the antisymmetric part is tiny; take the axis from the
  // symmetric part instead, where (R + R^T)/2 = c I + (1-c) a a^T.
  const Mat3 A =
      (0.5 * (R + R.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  int k = 0;
  A.diagonal().maxCoeff(&k);
  Vec3 axis = A.col(k).normalized();
  if (axis.dot(w) < 0.0) axis = -axis;
  return angle * axis;
}

inline Mat3 boxplus(const Mat3& R, const Vec3& dtheta) {
  return R * exp_so3(dtheta);
}

// Inverse of boxplus: (R boxplus d) boxminus R = d.
inline Vec3 boxminus(const Mat3& Ra, const Mat3& Rb) {
  return log_so3(Rb.transpose() * Ra);
}

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& R_, const Vec3& p_) : R(R_), p(p_) {}

  Pose compose(const Pose& other) const {
    return Pose(R * other.R, R * other.p + p);
  }
  Pose inverse() const {
    return Pose(R.transpose(), -(R.transpose() * p));
  }
  Vec3 act(const Vec3& x) const { return R * x + p; }

  // Error order is [dtheta, dp]; rotation right-perturbed, position additive.
  Pose boxplus(const Vec6& d) const {
    return Pose(R * exp_so3(d.head<3>()), p + d.tail<3>());
  }
  Vec6 boxminus(const Pose& other) const {
    Vec6 d;
    d.head<3>() = log_so3(other.R.transpose() * R);
    d.tail<3>() = p - other.p;
    return d;
  }
};

}  // namespace ulins
