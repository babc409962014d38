#include <catch2/catch_amalgamated.hpp>

#include "ulins/lidar.hpp"
#include "ulins/random.hpp"
#include "ulins/trajectory.hpp"

using namespace ulins;

namespace {

Vec3 random_vec(Rng& rng, double lo, double hi) {
  return Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

Pose random_pose(Rng& rng, double max_angle, double span) {
  Vec3 axis = random_vec(rng, -1, 1).normalized();
  return Pose(exp_so3(axis * rng.uniform(0, max_angle)),
              random_vec(rng, -span, span));
}

std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, int k) {
  std::vector<std::pair<double, int>> d;
  d.reserve(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    d.emplace_back((pts[i] - q).squaredNorm(), static_cast<int>(i));
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < static_cast<int>(d.size()); ++i) {
    out.push_back(d[i].second);
  }
  return out;
}

// Grid on the plane x = depth, in sensor coordinates.
std::vector<Vec3> wall_grid(double depth, int nodes, double extent) {
  std::vector<Vec3> pts;
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const double y = -extent + 2 * extent * i / (nodes - 1);
      const double z = -extent + 2 * extent * j / (nodes - 1);
      pts.emplace_back(depth, y, z);
    }
  }
  return pts;
}

FilterState state_with_lidar_clones(const std::vector<Pose>& poses) {
  FilterState s;
  for (const Pose& p : poses) {
    CloneState c;
    c.id = s.next_clone_id++;
    c.timestamp = 0.1 * c.id;
    c.pose = p;
    s.lidar_clones.push_back(c);
  }
  s.P = Eigen::MatrixXd::Zero(s.layout().dim(), s.layout().dim());
  return s;
}

}  // namespace

TEST_CASE("kdtree matches brute-force 5-NN on random clouds") {
  Rng rng(derive_seed(3, 1));
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 100 + static_cast<int>(rng.bounded(4900));
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) pts.push_back(random_vec(rng, -10, 10));
    const KdTree tree(pts);
    for (int q = 0; q < 200; ++q) {
      const Vec3 query = random_vec(rng, -12, 12);
      REQUIRE(tree.knn(query, 5) == brute_knn(pts, query, 5));
    }
  }
  // Smaller-than-k tree returns everything.
  const KdTree tiny(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0)});
  REQUIRE(tiny.knn(Vec3(0.1, 0, 0), 5).size() == 2);
}

TEST_CASE("select_keyframe thresholds") {
  const KeyframeThresholds thr;
  const Pose id;
  REQUIRE_FALSE(select_keyframe(id, id, 0.0, thr));
  REQUIRE(select_keyframe(Pose(Mat3::Identity(), Vec3(0.6, 0, 0)), id, 0.0, thr));
  REQUIRE(select_keyframe(Pose(exp_so3(Vec3(0, 0, 0.2)), Vec3::Zero()), id, 0.0,
                          thr));  // 11.5 deg
  REQUIRE(select_keyframe(id, id, 0.6, thr));
}

TEST_CASE("keyframe cadence at paper speed") {
  // Constant 1.45 m/s; defaults should give a mean interval of 0.25-0.40 s.
  CircleTrajectory traj(Vec3(11, 12, 0.8), 6.0, 1.45 / 6.0);
  const KeyframeThresholds thr;
  double last_kf_t = 0.0;
  Pose last_kf = [&] {
    const TrajectorySample s = traj.at(0.0);
    return Pose(s.R, s.p);
  }();
  std::vector<double> intervals;
  for (double t = 0.1; t <= 120.0; t += 0.1) {
    const TrajectorySample s = traj.at(t);
    const Pose cur(s.R, s.p);
    if (select_keyframe(cur, last_kf, t - last_kf_t, thr)) {
      intervals.push_back(t - last_kf_t);
      last_kf = cur;
      last_kf_t = t;
    }
  }
  double mean = 0;
  for (double v : intervals) mean += v;
  mean /= intervals.size();
  REQUIRE(mean > 0.25);
  REQUIRE(mean < 0.40);
}

TEST_CASE("project_point") {
  Rng rng(derive_seed(3, 2));
  const Vec3 p(1, 2, 3);
  const Pose id;
  REQUIRE((project_point(p, id, id) - p).norm() == 0.0);

  const Pose shift(Mat3::Identity(), Vec3(0.5, -1, 2));
  REQUIRE((project_point(p, shift, id) - (p + shift.p)).norm() < 1e-15);

  for (int i = 0; i < 200; ++i) {
    const Pose cur = random_pose(rng, 2.0, 5.0);
    const Pose k = random_pose(rng, 2.0, 5.0);
    const Vec3 x = random_vec(rng, -4, 4);
    const Vec3 oracle = k.inverse().compose(cur).act(x);
    REQUIRE((project_point(x, cur, k) - oracle).norm() < 1e-12);
  }
}

TEST_CASE("fit_plane basics") {
  std::vector<Vec3> flat = {Vec3(0, 0, 2), Vec3(1, 0, 2), Vec3(0, 1, 2),
                            Vec3(1, 1, 2), Vec3(0.5, 0.5, 2)};
  const auto plane = fit_plane(flat);
  REQUIRE(plane.has_value());
  REQUIRE(std::abs(std::abs(plane->n.z()) - 1.0) < 1e-12);
  REQUIRE(std::abs(plane->n.z() * 2 + plane->d) < 1e-12);
  for (const Vec3& p : flat) REQUIRE(plane->distance(p) < 1e-12);

  std::vector<Vec3> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(i * 0.3, i * 0.1, -i * 0.2);
  REQUIRE_FALSE(fit_plane(line).has_value());

  REQUIRE_THROWS(fit_plane({Vec3(0, 0, 0), Vec3(1, 0, 0)}));
}

TEST_CASE("fit_plane recovers noisy plane normals") {
  Rng rng(derive_seed(3, 3));
  std::vector<double> errs;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 n = random_vec(rng, -1, 1).normalized();
    const double d = rng.uniform(-3, 3);
    // Basis in the plane.
    const Vec3 t1 = n.cross(std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY())
                        .normalized();
    const Vec3 t2 = n.cross(t1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i) {
      const Vec3 base = -d * n + rng.uniform(-1, 1) * t1 + rng.uniform(-1, 1) * t2;
      pts.push_back(base + n * rng.gaussian(0, 0.01));
    }
    const auto plane = fit_plane(pts);
    if (!plane) continue;  // rare unlucky draw, excluded from the median
    const double cosang = std::abs(plane->n.dot(n));
    errs.push_back(std::acos(std::min(cosang, 1.0)) * 180.0 / M_PI);
  }
  REQUIRE(errs.size() > 900);
  std::sort(errs.begin(), errs.end());
  REQUIRE(errs[errs.size() / 2] < 2.0);  // median within 2 degrees
}

TEST_CASE("associate: identical wall frames, identity poses") {
  LidarKeyframe target;
  target.timestamp = 0.0;
  target.clone_id = 0;
  target.cloud = wall_grid(2.0, 12, 1.0);
  target.finalize();

  LidarKeyframe current;
  current.timestamp = 0.3;
  current.clone_id = -1;
  current.cloud = wall_grid(2.0, 12, 1.0);

  FilterState s = state_with_lidar_clones({Pose()});
  LidarConfig cfg;
  const auto assocs = associate(current, {target}, s, cfg);
  REQUIRE(assocs.size() == current.cloud.size());
  for (const auto& a : assocs) {
    REQUIRE(a.plane.distance(a.point) < 1e-9);
  }

  // Empty target map gives no associations.
  LidarKeyframe empty_kf;
  empty_kf.clone_id = 0;
  empty_kf.finalize();
  REQUIRE(associate(current, {empty_kf}, s, cfg).empty());
}

TEST_CASE("associate matches a brute-force oracle on a room scene") {
  Rng rng(derive_seed(3, 4));
  // Random points on three faces of a room, in a shared world frame.
  const auto room_cloud = [&](int count) {
    std::vector<Vec3> world;
    for (int i = 0; i < count; ++i) {
      switch (rng.bounded(3)) {
        case 0:  // floor z=0
          world.emplace_back(rng.uniform(0, 6), rng.uniform(0, 6), 0);
          break;
        case 1:  // wall x=0
          world.emplace_back(0, rng.uniform(0, 6), rng.uniform(0, 2.5));
          break;
        default:  // wall y=6
          world.emplace_back(rng.uniform(0, 6), 6, rng.uniform(0, 2.5));
      }
    }
    return world;
  };

  const Pose pose_k(exp_so3(Vec3(0, 0, 0.3)), Vec3(3, 2, 0.5));
  const Pose pose_cur(exp_so3(Vec3(0, 0, 0.5)), Vec3(3.4, 2.2, 0.5));

  LidarKeyframe target;
  target.clone_id = 0;
  for (const Vec3& w : room_cloud(1500)) {
    target.cloud.push_back(pose_k.inverse().act(w));
  }
  target.finalize();

  LidarKeyframe current;
  current.clone_id = -1;
  for (const Vec3& w : room_cloud(900)) {
    current.cloud.push_back(pose_cur.inverse().act(w));
  }

  FilterState s = state_with_lidar_clones({pose_k});
  s.nav.R = pose_cur.R;
  s.nav.p = pose_cur.p;
  // Identity extrinsics: sensor frame == body frame.
  LidarConfig cfg;
  cfg.max_candidates = 900;

  const auto fast = associate(current, {target}, s, cfg);

  // Oracle: same pipeline with brute-force neighbor search.
  std::vector<Association> slow;
  for (const Vec3& p : current.cloud) {
    const Vec3 pk = project_point(p, pose_cur, pose_k);
    const auto idx = brute_knn(target.cloud, pk, 5);
    std::vector<Vec3> nn;
    for (int i : idx) nn.push_back(target.cloud[i]);
    const auto plane = fit_plane(nn, cfg.degeneracy_ratio);
    if (!plane) continue;
    bool ok = plane->distance(pk) < cfg.gate;
    for (const Vec3& q : nn) ok = ok && plane->distance(q) < cfg.gate;
    if (ok) slow.push_back({p, 0, *plane});
  }

  REQUIRE(fast.size() == slow.size());
  for (size_t i = 0; i < fast.size(); ++i) {
    REQUIRE((fast[i].point - slow[i].point).norm() == 0.0);
    REQUIRE((fast[i].plane.n - slow[i].plane.n).norm() < 1e-15);
    REQUIRE(std::abs(fast[i].plane.d - slow[i].plane.d) < 1e-15);
  }
  REQUIRE(fast.size() > 500);  // the scene actually associates
}

TEST_CASE("lidar residual value") {
  FilterState s = state_with_lidar_clones({Pose()});
  Association a;
  a.clone_id = 0;
  a.plane = Plane{Vec3(0, 0, 1), 0.0};

  LinearizedMeasurement meas;
  meas.residual.resize(1);
  meas.H.resize(1, s.layout().dim());
  meas.noise_var.resize(1);

  a.point = Vec3(1, 1, 0.2);  // projects to itself, 0.2 above the plane
  lidar_residual_row(a, s, 0.05, meas.residual, meas.H, meas.noise_var, 0);
  REQUIRE(meas.residual(0) == Catch::Approx(0.2).margin(1e-12));

  a.point = Vec3(1, 1, 0);  // on the plane
  lidar_residual_row(a, s, 0.05, meas.residual, meas.H, meas.noise_var, 0);
  REQUIRE(meas.residual(0) == Catch::Approx(0.0).margin(1e-12));

  a.clone_id = 99;  // stale
  REQUIRE_THROWS(
      lidar_residual_row(a, s, 0.05, meas.residual, meas.H, meas.noise_var, 0));
}

TEST_CASE("lidar Jacobian matches central finite differences") {
  Rng rng(derive_seed(3, 5));
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    FilterState s = state_with_lidar_clones(
        {random_pose(rng, 1.5, 3.0), random_pose(rng, 1.5, 3.0)});
    s.nav.R = random_pose(rng, 1.5, 3.0).R;
    s.nav.p = random_vec(rng, -3, 3);
    s.extrinsics = random_pose(rng, 0.3, 0.2);

    Association a;
    a.clone_id = trial % 2;
    a.point = random_vec(rng, -2, 2);
    a.plane.n = random_vec(rng, -1, 1).normalized();
    a.plane.d = rng.uniform(-2, 2);

    const int n = s.layout().dim();
    LinearizedMeasurement meas;
    meas.residual.resize(1);
    meas.H.resize(1, n);
    meas.noise_var.resize(1);
    lidar_residual_row(a, s, 0.05, meas.residual, meas.H, meas.noise_var, 0);

    const auto residual_at = [&](const FilterState& x) {
      LinearizedMeasurement tmp;
      tmp.residual.resize(1);
      tmp.H.resize(1, n);
      tmp.noise_var.resize(1);
      lidar_residual_row(a, x, 0.05, tmp.residual, tmp.H, tmp.noise_var, 0);
      return tmp.residual(0);
    };

    Eigen::RowVectorXd fd = Eigen::RowVectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      FilterState plus = s, minus = s;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(n);
      dx(i) = h;
      plus.apply_correction(dx);
      dx(i) = -h;
      minus.apply_correction(dx);
      fd(i) = (residual_at(plus) - residual_at(minus)) / (2 * h);
    }
    // Convention: stored H is minus the residual derivative.
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    REQUIRE((fd + meas.H.row(0)).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
}

TEST_CASE("lidar residual is invariant under a common world transform") {
  Rng rng(derive_seed(3, 6));
  for (int trial = 0; trial < 50; ++trial) {
    FilterState s = state_with_lidar_clones({random_pose(rng, 1.0, 3.0)});
    s.nav.R = random_pose(rng, 1.0, 3.0).R;
    s.nav.p = random_vec(rng, -3, 3);
    s.extrinsics = random_pose(rng, 0.2, 0.1);

    Association a;
    a.clone_id = 0;
    a.point = random_vec(rng, -2, 2);
    a.plane.n = random_vec(rng, -1, 1).normalized();
    a.plane.d = rng.uniform(-2, 2);

    const int n = s.layout().dim();
    LinearizedMeasurement m1;
    m1.residual.resize(1);
    m1.H.resize(1, n);
    m1.noise_var.resize(1);
    lidar_residual_row(a, s, 0.05, m1.residual, m1.H, m1.noise_var, 0);

    const Pose T = random_pose(rng, 2.0, 10.0);
    FilterState s2 = s;
    s2.nav.R = T.R * s.nav.R;
    s2.nav.p = T.act(s.nav.p);
    s2.lidar_clones[0].pose =
        Pose(T.R * s.lidar_clones[0].pose.R, T.act(s.lidar_clones[0].pose.p));

    LinearizedMeasurement m2;
    m2.residual.resize(1);
    m2.H.resize(1, n);
    m2.noise_var.resize(1);
    lidar_residual_row(a, s2, 0.05, m2.residual, m2.H, m2.noise_var, 0);
    REQUIRE(m2.residual(0) == Catch::Approx(m1.residual(0)).margin(1e-9));
  }
}

TEST_CASE("lidar_measurement caps rows deterministically") {
  FilterState s = state_with_lidar_clones({Pose()});
  std::vector<Association> assocs;
  for (int i = 0; i < 100; ++i) {
    Association a;
    a.clone_id = 0;
    a.point = Vec3(1, 0.01 * i, 0.1);
    a.plane = Plane{Vec3(0, 0, 1), 0.0};
    assocs.push_back(a);
  }
  LidarConfig cfg;
  const auto all = lidar_measurement(assocs, s, cfg);
  REQUIRE(all.rows() == 100);
  const auto capped = lidar_measurement(assocs, s, cfg, 30);
  REQUIRE(capped.rows() <= 34);
  REQUIRE(capped.rows() >= 25);
  const auto capped2 = lidar_measurement(assocs, s, cfg, 30);
  REQUIRE((capped.residual - capped2.residual).norm() == 0.0);
}
