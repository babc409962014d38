#pragma once

// Multi-epoch NLOS outlier rejection: a damped Gauss-Newton (LM) anchor
// position solver over a sliding window of corrected ranges, and a RANSAC
// loop that classifies each anchor's window into inliers and outliers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ulins/geometry.hpp"
#include "ulins/random.hpp"

namespace ulins {

// One corrected range paired with the tag position implied by its epoch's
// clone. epoch/entry back-references let the estimator mark ranges consumed.
struct RangeObservation {
  double corrected = 0.0;
  Vec3 tag_position = Vec3::Zero();
  int epoch_index = -1;
  int entry_index = -1;
};

struct RangeWindow {
  int anchor_id = 0;
  std::vector<RangeObservation> obs;
};

// One classification event, for the diagnostics stream.
struct RansacDiagnostic {
  double t = 0.0;
  int anchor_id = 0;
  int window_size = 0;  // Q, ranges classified
  int inliers = -1;     // -1: classification skipped or found no consensus
  Vec3 position = Vec3::Zero();  // window-estimated anchor position
  double residual_sum = 0.0;
};

struct LmConfig {
  int max_iterations = 20;
  double step_tol = 1e-4;    // m; convergence threshold on |dp|
  double lambda0 = 1e-3;
  double lambda_up = 10.0;   // applied when a step increases the cost
  double lambda_down = 0.1;  // applied after an accepted step
};

struct LmResult {
  bool ok = false;           // false: ambiguous geometry or singular system
  bool converged = false;    // step fell under step_tol before the cap
  Vec3 position = Vec3::Zero();
  Eigen::VectorXd residuals;   // |tag - p| - corrected, per observation
  double abs_residual_sum = std::numeric_limits<double>::infinity();
};

namespace detail {

// Extents of the tag cloud along its principal axes, sorted descending.
inline Vec3 principal_spans(const std::vector<RangeObservation>& obs) {
  Vec3 mean = Vec3::Zero();
  for (const auto& o : obs) mean += o.tag_position;
  mean /= static_cast<double>(obs.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& o : obs) {
    const Vec3 d = o.tag_position - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 spans;
  for (int a = 0; a < 3; ++a) {
    const Vec3 axis = eig.eigenvectors().col(a);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& o : obs) {
      const double s = axis.dot(o.tag_position - mean);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    spans(a) = hi - lo;
  }
  std::sort(spans.data(), spans.data() + 3, std::greater<double>());
  return spans;
}

// Closed-form trilateration seed. With centered tags c_j = t_j - mean,
// subtracting the mean of the squared-range equations |c_j - y|^2 = d_j^2
// cancels |y|^2 and leaves the linear system 2 c_j . y = |c_j|^2 -
// mean|c|^2 - (d_j^2 - mean d^2), so the seed lands in the correct basin
// wherever the anchor sits. A near-planar cloud cannot observe the
// plane-normal component of y that way; it is rebuilt from the mean range
// excess over the in-plane fit and oriented upward, which keeps the
// above-the-plane convention for coplanar windows.
inline Vec3 algebraic_seed(const std::vector<RangeObservation>& obs) {
  const int q = static_cast<int>(obs.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& o : obs) mean += o.tag_position;
  mean /= q;

  Mat3 cov = Mat3::Zero();
  double mean_c2 = 0, mean_d2 = 0;
  for (const auto& o : obs) {
    const Vec3 c = o.tag_position - mean;
    cov += c * c.transpose();
    mean_c2 += c.squaredNorm();
    mean_d2 += o.corrected * o.corrected;
  }
  mean_c2 /= q;
  mean_d2 /= q;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);  // eigenvalues ascending

  Eigen::VectorXd b(q);
  for (int j = 0; j < q; ++j) {
    const Vec3 c = obs[j].tag_position - mean;
    const double d2 = obs[j].corrected * obs[j].corrected;
    b(j) = c.squaredNorm() - mean_c2 - (d2 - mean_d2);
  }

  const double normal_spread = std::sqrt(eig.eigenvalues()(0) / q);
  if (normal_spread >= 0.1) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> A(q, 3);
    for (int j = 0; j < q; ++j) {
      A.row(j) = 2.0 * (obs[j].tag_position - mean).transpose();
    }
    return mean + A.colPivHouseholderQr().solve(b).eval();
  }

  const Eigen::Matrix<double, 3, 2> E = eig.eigenvectors().rightCols<2>();
  Eigen::Matrix<double, Eigen::Dynamic, 2> A(q, 2);
  for (int j = 0; j < q; ++j) {
    A.row(j) =
        2.0 * (E.transpose() * (obs[j].tag_position - mean)).transpose();
  }
  const Vec3 in_plane = mean + E * A.colPivHouseholderQr().solve(b);
  double h2 = 0;
  for (const auto& o : obs) {
    h2 += o.corrected * o.corrected -
          (in_plane - o.tag_position).squaredNorm();
  }
  h2 = std::max(0.0, h2 / q);
  Vec3 n = eig.eigenvectors().col(0);
  if (n.z() < 0) n = -n;
  return in_plane + std::sqrt(h2) * n;
}

}  // namespace detail

// True when the window's tag positions do not span enough area to fix an
// anchor position: solving then risks a wildly wrong consensus, so the
// caller should skip rejection for this window.
inline bool window_geometry_degenerate(const RangeWindow& w,
                                       double min_secondary_span = 0.5) {
  if (w.obs.size() < 2) return true;
  return detail::principal_spans(w.obs)(1) < min_secondary_span;
}

// Levenberg-Marquardt on  sum_j (|tag_j - p| - d_j)^2  over the anchor
// position p. Initial guess (unless supplied): the closed-form algebraic
// fit, which selects the above-the-plane solution when all tags are
// coplanar.
inline LmResult lm_solve_anchor(const RangeWindow& w, const LmConfig& cfg,
                                const Vec3* initial = nullptr) {
  const int q = static_cast<int>(w.obs.size());
  if (q < 4) throw std::invalid_argument("lm_solve_anchor: need >= 4 ranges");
  if (cfg.max_iterations < 1 || !(cfg.step_tol > 0) || !(cfg.lambda0 > 0)) {
    throw std::invalid_argument("lm_solve_anchor: bad config");
  }

  LmResult res;
  const Vec3 spans = detail::principal_spans(w.obs);
  if (spans(1) <= 1e-9 * std::max(spans(0), 1.0)) {
    return res;  // collinear tags: anchor position is ambiguous
  }

  Vec3 p = initial ? *initial : detail::algebraic_seed(w.obs);

  const auto eval = [&](const Vec3& at, Eigen::VectorXd& r) {
    r.resize(q);
    for (int j = 0; j < q; ++j) {
      r(j) = (w.obs[j].tag_position - at).norm() - w.obs[j].corrected;
    }
    return r.squaredNorm();
  };

  Eigen::VectorXd r;
  double cost = eval(p, r);
  double lambda = cfg.lambda0;

  for (int k = 0; k < cfg.max_iterations; ++k) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> J(q, 3);
    for (int j = 0; j < q; ++j) {
      const Vec3 d = w.obs[j].tag_position - p;
      const double n = d.norm();
      if (n < 1e-9) {
        J.row(j).setZero();  // on top of a tag: direction undefined
      } else {
        J.row(j) = -(d / n).transpose();
      }
    }
    const Mat3 A = J.transpose() * J + lambda * Mat3::Identity();
    const Vec3 g = J.transpose() * r;
    Eigen::LDLT<Mat3> ldlt(A);
    const Vec3 dp = ldlt.solve(-g);
    if (!dp.allFinite()) return res;  // singular despite damping

    Eigen::VectorXd r_new;
    const double cost_new = eval(p + dp, r_new);
    if (cost_new < cost) {
      p += dp;
      cost = cost_new;
      r = r_new;
      lambda *= cfg.lambda_down;
    } else {
      lambda *= cfg.lambda_up;
    }
    if (dp.norm() < cfg.step_tol) {
      // A negligible proposed step means the gradient is flat at this
      // damping whether or not the step was accepted; a start already at
      // the optimum would otherwise loop to the cap rejecting zero steps.
      res.converged = true;
      break;
    }
  }

  res.ok = true;
  res.position = p;
  res.residuals = r;
  res.abs_residual_sum = r.lpNorm<1>();
  return res;
}

struct RansacConfig {
  int sample_size = 4;        // P: ranges per minimal hypothesis
  double inlier_threshold = 0.10;  // m, on |range residual|
  int min_extra_inliers = -1;      // L; -1 selects max(4, ceil(0.4 Q))
  int max_iterations = 100;        // K
  bool normalize_error_sum = false;  // score by mean instead of sum
};

struct RansacResult {
  enum Status { kOk, kNoConsensus, kInsufficientWindow };
  Status status = kNoConsensus;
  Vec3 position = Vec3::Zero();
  std::vector<int> inliers;  // indices into the window, ascending
  double error_sum = std::numeric_limits<double>::infinity();
};

// Hypothesize-and-verify classification of one anchor window. A minimal
// sample of P ranges fixes an anchor hypothesis; the remaining ranges voting
// within `inlier_threshold` form the extra consensus; only when that count
// exceeds L is the hypothesis refit on the whole consensus and scored by its
// absolute residual sum. The largest consensus over K iterations wins, with
// the score breaking ties between equal-sized sets: selecting on the score
// alone would favor small, incidentally tight subsets over the full inlier
// set and throw away valid ranges.
inline RansacResult ransac_reject(const RangeWindow& w,
                                  const RansacConfig& cfg,
                                  const LmConfig& lm_cfg, Rng& rng) {
  const int q = static_cast<int>(w.obs.size());
  RansacResult res;
  if (cfg.sample_size < 4) {
    throw std::invalid_argument("ransac_reject: sample_size < 4");
  }
  if (q < cfg.sample_size) {
    res.status = RansacResult::kInsufficientWindow;
    return res;
  }
  const int min_extra =
      cfg.min_extra_inliers >= 0
          ? cfg.min_extra_inliers
          : std::max(4, static_cast<int>(std::ceil(0.4 * q)));

  std::vector<int> order(q);
  for (int k = 0; k < cfg.max_iterations; ++k) {
    // Partial Fisher-Yates draw of P distinct indices.
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < cfg.sample_size; ++i) {
      const int j = i + static_cast<int>(rng.bounded(
                            static_cast<std::uint64_t>(q - i)));
      std::swap(order[i], order[j]);
    }

    RangeWindow maybe{w.anchor_id, {}};
    for (int i = 0; i < cfg.sample_size; ++i) {
      maybe.obs.push_back(w.obs[order[i]]);
    }
    const LmResult fit = lm_solve_anchor(maybe, lm_cfg);
    if (!fit.ok) continue;

    std::vector<int> consensus(order.begin(),
                               order.begin() + cfg.sample_size);
    for (int j = cfg.sample_size; j < q; ++j) {
      const double err = std::abs(
          (w.obs[order[j]].tag_position - fit.position).norm() -
          w.obs[order[j]].corrected);
      if (err < cfg.inlier_threshold) consensus.push_back(order[j]);
    }
    const int extra = static_cast<int>(consensus.size()) - cfg.sample_size;
    if (extra <= min_extra) continue;

    RangeWindow all{w.anchor_id, {}};
    for (int idx : consensus) all.obs.push_back(w.obs[idx]);
    const LmResult better = lm_solve_anchor(all, lm_cfg, &fit.position);
    if (!better.ok) continue;

    double score = better.abs_residual_sum;
    if (cfg.normalize_error_sum) score /= static_cast<double>(all.obs.size());
    const int size = static_cast<int>(consensus.size());
    const int best_size = static_cast<int>(res.inliers.size());
    if (size > best_size || (size == best_size && score < res.error_sum)) {
      res.status = RansacResult::kOk;
      res.error_sum = score;
      res.position = better.position;
      std::sort(consensus.begin(), consensus.end());
      res.inliers = consensus;
    }
  }
  return res;
}

}  // namespace ulins
