#pragma once

// File formats: sensor stream CSVs, TUM trajectories, a binary point-cloud
// container, JSON scenario/metrics documents, and RANSAC diagnostics.
// Doubles are printed with %.17g so text files round-trip bit-exactly and
// rerunning the same seed yields byte-identical outputs. All writers stage
// to a temp file and rename, so readers never observe partial files.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulins/evaluation.hpp"
#include "ulins/ins.hpp"
#include "ulins/outlier_rejection.hpp"
#include "ulins/simulator.hpp"
#include "ulins/state.hpp"

namespace ulins {

inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<double> parse_csv_line(const std::string& line) {
  std::vector<double> out;
  const char* s = line.c_str();
  char* end = nullptr;
  while (*s) {
    const double v = std::strtod(s, &end);
    if (end == s) break;
    out.push_back(v);
    s = end;
    while (*s == ',' || *s == ' ' || *s == '\t') ++s;
  }
  return out;
}

// Yields the numeric rows of a CSV body, skipping the header line.
inline std::vector<std::vector<double>> parse_csv(const std::string& text,
                                                  size_t min_cols) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto vals = parse_csv_line(line);
    if (vals.size() < min_cols) continue;  // header or malformed
    rows.push_back(std::move(vals));
  }
  return rows;
}

}  // namespace detail

// ---- IMU stream: t,wx,wy,wz,fx,fy,fz ----

inline void write_imu_csv(const std::filesystem::path& path,
                          const std::vector<ImuSample>& samples) {
  std::string out = "t,wx,wy,wz,fx,fy,fz\n";
  for (const ImuSample& s : samples) {
    out += g17(s.t);
    for (int i = 0; i < 3; ++i) out += "," + g17(s.gyro(i));
    for (int i = 0; i < 3; ++i) out += "," + g17(s.accel(i));
    out += "\n";
  }
  atomic_write(path, out);
}

inline std::vector<ImuSample> read_imu_csv(
    const std::filesystem::path& path) {
  std::vector<ImuSample> samples;
  for (const auto& r : detail::parse_csv(read_file(path), 7)) {
    ImuSample s;
    s.t = r[0];
    s.gyro = Vec3(r[1], r[2], r[3]);
    s.accel = Vec3(r[4], r[5], r[6]);
    samples.push_back(s);
  }
  return samples;
}

// ---- UWB ranges: t,anchor_id,range_m ----

inline void write_ranges_csv(const std::filesystem::path& path,
                             const std::vector<RangeMeasurement>& ranges) {
  std::string out = "t,anchor_id,range_m\n";
  for (const RangeMeasurement& r : ranges) {
    out += g17(r.t) + "," + std::to_string(r.anchor_id) + "," +
           g17(r.range) + "\n";
  }
  atomic_write(path, out);
}

inline std::vector<RangeMeasurement> read_ranges_csv(
    const std::filesystem::path& path) {
  std::vector<RangeMeasurement> ranges;
  for (const auto& r : detail::parse_csv(read_file(path), 3)) {
    ranges.push_back({r[0], static_cast<int>(r[1]), r[2]});
  }
  return ranges;
}

// ---- Anchor survey table: id,x,y,z ----

inline void write_anchors_csv(const std::filesystem::path& path,
                              const std::vector<AnchorState>& anchors) {
  std::string out = "id,x,y,z\n";
  for (const AnchorState& a : anchors) {
    out += std::to_string(a.id);
    for (int i = 0; i < 3; ++i) out += "," + g17(a.position(i));
    out += "\n";
  }
  atomic_write(path, out);
}

inline std::vector<AnchorState> read_anchors_csv(
    const std::filesystem::path& path) {
  std::vector<AnchorState> anchors;
  for (const auto& r : detail::parse_csv(read_file(path), 4)) {
    AnchorState a;
    a.id = static_cast<int>(r[0]);
    a.position = Vec3(r[1], r[2], r[3]);
    anchors.push_back(a);
  }
  return anchors;
}

// ---- Trajectories, TUM format: t x y z qx qy qz qw ----

inline void write_tum(const std::filesystem::path& path,
                      const TrajectoryEstimate& traj) {
  std::string out;
  for (const TimedPose& s : traj) {
    Eigen::Quaterniond q(s.R);
    if (q.w() < 0) q.coeffs() = -q.coeffs();  // canonical sign
    out += g17(s.t) + " " + g17(s.p.x()) + " " + g17(s.p.y()) + " " +
           g17(s.p.z()) + " " + g17(q.x()) + " " + g17(q.y()) + " " +
           g17(q.z()) + " " + g17(q.w()) + "\n";
  }
  atomic_write(path, out);
}

inline TrajectoryEstimate read_tum(const std::filesystem::path& path) {
  TrajectoryEstimate traj;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TimedPose s;
    double qx, qy, qz, qw;
    if (!(ls >> s.t >> s.p.x() >> s.p.y() >> s.p.z() >> qx >> qy >> qz >>
          qw)) {
      continue;
    }
    s.R = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    traj.push_back(s);
  }
  return traj;
}

// ---- Point clouds: binary container ----
// Layout (native endianness):
//   "ULPC" magic, u32 version (=1), u32 frame count, then per frame
//   f64 timestamp, u32 point count, point count * 3 f64 (x y z).

inline void write_clouds(const std::filesystem::path& path,
                         const std::vector<PointCloud>& frames) {
  std::string out;
  const auto put = [&out](const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
  };
  out += "ULPC";
  const std::uint32_t version = 1;
  const std::uint32_t nframes = static_cast<std::uint32_t>(frames.size());
  put(&version, 4);
  put(&nframes, 4);
  for (const PointCloud& f : frames) {
    put(&f.timestamp, 8);
    const std::uint32_t n = static_cast<std::uint32_t>(f.points.size());
    put(&n, 4);
    for (const Vec3& p : f.points) {
      double xyz[3] = {p.x(), p.y(), p.z()};
      put(xyz, 24);
    }
  }
  atomic_write(path, out);
}

inline std::vector<PointCloud> read_clouds(
    const std::filesystem::path& path) {
  const std::string data = read_file(path);
  size_t off = 0;
  const auto get = [&](void* p, size_t n) {
    if (off + n > data.size()) {
      throw std::runtime_error("truncated cloud file: " + path.string());
    }
    std::memcpy(p, data.data() + off, n);
    off += n;
  };
  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, "ULPC", 4) != 0) {
    throw std::runtime_error("bad cloud magic: " + path.string());
  }
  std::uint32_t version = 0, nframes = 0;
  get(&version, 4);
  get(&nframes, 4);
  if (version != 1) throw std::runtime_error("unsupported cloud version");
  std::vector<PointCloud> frames(nframes);
  for (auto& f : frames) {
    get(&f.timestamp, 8);
    std::uint32_t n = 0;
    get(&n, 4);
    f.points.resize(n);
    for (auto& p : f.points) {
      double xyz[3];
      get(xyz, 24);
      p = Vec3(xyz[0], xyz[1], xyz[2]);
    }
  }
  return frames;
}

// ---- Scenario JSON (schema ulins-scenario-v1) ----

namespace detail {

inline nlohmann::json vec3_json(const Vec3& v) {
  return nlohmann::json::array({v.x(), v.y(), v.z()});
}

inline Vec3 json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::runtime_error("scenario: expected [x,y,z]");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json pose_json(const Pose& p) {
  return {{"rotvec", vec3_json(log_so3(p.R))}, {"p", vec3_json(p.p)}};
}

inline Pose json_pose(const nlohmann::json& j) {
  Pose p;
  p.R = exp_so3(json_vec3(j.at("rotvec")));
  p.p = json_vec3(j.at("p"));
  return p;
}

inline const char* trajectory_type_name(TrajectorySpec::Type t) {
  switch (t) {
    case TrajectorySpec::Type::kLine: return "line";
    case TrajectorySpec::Type::kCircle: return "circle";
    case TrajectorySpec::Type::kFigureEight: return "figure_eight";
    case TrajectorySpec::Type::kWaypoints: return "waypoints";
  }
  return "figure_eight";
}

inline TrajectorySpec::Type trajectory_type_from(const std::string& s) {
  if (s == "line") return TrajectorySpec::Type::kLine;
  if (s == "circle") return TrajectorySpec::Type::kCircle;
  if (s == "figure_eight") return TrajectorySpec::Type::kFigureEight;
  if (s == "waypoints") return TrajectorySpec::Type::kWaypoints;
  throw std::runtime_error("scenario: unknown trajectory type " + s);
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  using nlohmann::json;
  json j;
  j["schema"] = "ulins-scenario-v1";
  j["name"] = sc.name;
  j["duration"] = sc.duration;
  j["seed"] = sc.seed;

  json t;
  t["type"] = detail::trajectory_type_name(sc.trajectory.type);
  t["origin"] = detail::vec3_json(sc.trajectory.origin);
  t["direction"] = detail::vec3_json(sc.trajectory.direction);
  t["amplitude"] = sc.trajectory.amplitude;
  t["yaw"] = sc.trajectory.yaw;
  t["center"] = detail::vec3_json(sc.trajectory.center);
  t["radius"] = sc.trajectory.radius;
  t["omega"] = sc.trajectory.omega;
  t["phase"] = sc.trajectory.phase;
  t["ax"] = sc.trajectory.ax;
  t["ay"] = sc.trajectory.ay;
  t["az"] = sc.trajectory.az;
  t["wp_times"] = sc.trajectory.wp_times;
  t["wp_points"] = json::array();
  for (const Vec3& p : sc.trajectory.wp_points) {
    t["wp_points"].push_back(detail::vec3_json(p));
  }
  t["follow_yaw"] = sc.trajectory.follow_yaw;
  j["trajectory"] = t;

  j["planes"] = json::array();
  for (const PlaneRect& p : sc.planes) {
    j["planes"].push_back({{"origin", detail::vec3_json(p.origin)},
                           {"edge_u", detail::vec3_json(p.edge_u)},
                           {"edge_v", detail::vec3_json(p.edge_v)}});
  }

  j["anchors"] = json::array();
  for (const AnchorTruth& a : sc.anchors) {
    j["anchors"].push_back({{"id", a.id},
                            {"position", detail::vec3_json(a.position)},
                            {"scale", a.scale},
                            {"bias", a.bias},
                            {"dropout_prob", a.dropout_prob},
                            {"nlos_prob", a.nlos_prob}});
  }

  j["imu_rate"] = sc.imu_rate;
  j["imu_noise"] = {{"gyro_noise_density", sc.imu_noise.gyro_noise_density},
                    {"accel_noise_density", sc.imu_noise.accel_noise_density},
                    {"gyro_bias_walk", sc.imu_noise.gyro_bias_walk},
                    {"accel_bias_walk", sc.imu_noise.accel_bias_walk},
                    {"gravity_magnitude", sc.imu_noise.gravity_magnitude}};
  j["gyro_bias"] = detail::vec3_json(sc.gyro_bias);
  j["accel_bias"] = detail::vec3_json(sc.accel_bias);

  j["lidar"] = {{"rate", sc.lidar.rate},
                {"points_per_frame", sc.lidar.points_per_frame},
                {"fov_deg", sc.lidar.fov_deg},
                {"max_range", sc.lidar.max_range},
                {"noise_std", sc.lidar.noise_std},
                {"extrinsics", detail::pose_json(sc.lidar.extrinsics)}};
  j["uwb"] = {{"rate", sc.uwb.rate},
              {"noise_std", sc.uwb.noise_std},
              {"tag_lever_arm", detail::vec3_json(sc.uwb.tag_lever_arm)}};

  json nlos;
  nlos["offset_min"] = sc.nlos.offset_min;
  nlos["offset_max"] = sc.nlos.offset_max;
  nlos["zones"] = json::array();
  for (const NlosZone& z : sc.nlos.zones) {
    nlos["zones"].push_back({{"lo", detail::vec3_json(z.lo)},
                             {"hi", detail::vec3_json(z.hi)},
                             {"anchor_ids", z.anchor_ids},
                             {"prob", z.prob}});
  }
  j["nlos"] = nlos;
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != std::string("ulins-scenario-v1")) {
    throw std::runtime_error("scenario: missing or unknown schema id");
  }
  Scenario sc;
  sc.name = j.value("name", sc.name);
  sc.duration = j.value("duration", sc.duration);
  sc.seed = j.value("seed", sc.seed);

  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    sc.trajectory.type =
        detail::trajectory_type_from(t.value("type", "figure_eight"));
    if (t.contains("origin"))
      sc.trajectory.origin = detail::json_vec3(t.at("origin"));
    if (t.contains("direction"))
      sc.trajectory.direction = detail::json_vec3(t.at("direction"));
    sc.trajectory.amplitude = t.value("amplitude", sc.trajectory.amplitude);
    sc.trajectory.yaw = t.value("yaw", sc.trajectory.yaw);
    if (t.contains("center"))
      sc.trajectory.center = detail::json_vec3(t.at("center"));
    sc.trajectory.radius = t.value("radius", sc.trajectory.radius);
    sc.trajectory.omega = t.value("omega", sc.trajectory.omega);
    sc.trajectory.phase = t.value("phase", sc.trajectory.phase);
    sc.trajectory.ax = t.value("ax", sc.trajectory.ax);
    sc.trajectory.ay = t.value("ay", sc.trajectory.ay);
    sc.trajectory.az = t.value("az", sc.trajectory.az);
    if (t.contains("wp_times"))
      sc.trajectory.wp_times = t.at("wp_times").get<std::vector<double>>();
    if (t.contains("wp_points")) {
      sc.trajectory.wp_points.clear();
      for (const auto& p : t.at("wp_points"))
        sc.trajectory.wp_points.push_back(detail::json_vec3(p));
    }
    sc.trajectory.follow_yaw = t.value("follow_yaw", true);
  }

  if (j.contains("planes")) {
    sc.planes.clear();
    for (const auto& p : j.at("planes")) {
      PlaneRect r;
      r.origin = detail::json_vec3(p.at("origin"));
      r.edge_u = detail::json_vec3(p.at("edge_u"));
      r.edge_v = detail::json_vec3(p.at("edge_v"));
      sc.planes.push_back(r);
    }
  }

  if (j.contains("anchors")) {
    sc.anchors.clear();
    for (const auto& a : j.at("anchors")) {
      AnchorTruth an;
      an.id = a.at("id").get<int>();
      an.position = detail::json_vec3(a.at("position"));
      an.scale = a.value("scale", 1.0);
      an.bias = a.value("bias", 0.0);
      an.dropout_prob = a.value("dropout_prob", 0.0);
      an.nlos_prob = a.value("nlos_prob", 0.0);
      sc.anchors.push_back(an);
    }
  }

  sc.imu_rate = j.value("imu_rate", sc.imu_rate);
  if (j.contains("imu_noise")) {
    const auto& n = j.at("imu_noise");
    sc.imu_noise.gyro_noise_density =
        n.value("gyro_noise_density", sc.imu_noise.gyro_noise_density);
    sc.imu_noise.accel_noise_density =
        n.value("accel_noise_density", sc.imu_noise.accel_noise_density);
    sc.imu_noise.gyro_bias_walk =
        n.value("gyro_bias_walk", sc.imu_noise.gyro_bias_walk);
    sc.imu_noise.accel_bias_walk =
        n.value("accel_bias_walk", sc.imu_noise.accel_bias_walk);
    sc.imu_noise.gravity_magnitude =
        n.value("gravity_magnitude", sc.imu_noise.gravity_magnitude);
  }
  if (j.contains("gyro_bias"))
    sc.gyro_bias = detail::json_vec3(j.at("gyro_bias"));
  if (j.contains("accel_bias"))
    sc.accel_bias = detail::json_vec3(j.at("accel_bias"));

  if (j.contains("lidar")) {
    const auto& l = j.at("lidar");
    sc.lidar.rate = l.value("rate", sc.lidar.rate);
    sc.lidar.points_per_frame =
        l.value("points_per_frame", sc.lidar.points_per_frame);
    sc.lidar.fov_deg = l.value("fov_deg", sc.lidar.fov_deg);
    sc.lidar.max_range = l.value("max_range", sc.lidar.max_range);
    sc.lidar.noise_std = l.value("noise_std", sc.lidar.noise_std);
    if (l.contains("extrinsics"))
      sc.lidar.extrinsics = detail::json_pose(l.at("extrinsics"));
  }
  if (j.contains("uwb")) {
    const auto& u = j.at("uwb");
    sc.uwb.rate = u.value("rate", sc.uwb.rate);
    sc.uwb.noise_std = u.value("noise_std", sc.uwb.noise_std);
    if (u.contains("tag_lever_arm"))
      sc.uwb.tag_lever_arm = detail::json_vec3(u.at("tag_lever_arm"));
  }

  if (j.contains("nlos")) {
    const auto& n = j.at("nlos");
    sc.nlos.offset_min = n.value("offset_min", sc.nlos.offset_min);
    sc.nlos.offset_max = n.value("offset_max", sc.nlos.offset_max);
    if (n.contains("zones")) {
      sc.nlos.zones.clear();
      for (const auto& z : n.at("zones")) {
        NlosZone zone;
        zone.lo = detail::json_vec3(z.at("lo"));
        zone.hi = detail::json_vec3(z.at("hi"));
        if (z.contains("anchor_ids"))
          zone.anchor_ids = z.at("anchor_ids").get<std::vector<int>>();
        zone.prob = z.value("prob", 1.0);
        sc.nlos.zones.push_back(zone);
      }
    }
  }
  return sc;
}

inline void write_scenario_json(const std::filesystem::path& path,
                                const Scenario& sc) {
  atomic_write(path, scenario_to_json(sc).dump(2) + "\n");
}

inline Scenario read_scenario_json(const std::filesystem::path& path) {
  return scenario_from_json(nlohmann::json::parse(read_file(path)));
}

// ---- Metrics report JSON (schema ulins-metrics-v1) ----

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["schema"] = "ulins-metrics-v1";
  j["label"] = r.label;
  j["rmse_2d_m"] = r.rmse_2d;
  j["rmse_3d_m"] = r.rmse_3d;
  j["mean_error_m"] = r.mean_error;
  j["max_error_m"] = r.max_error;
  j["samples"] = r.samples;
  j["cdf"] = nlohmann::json::array();
  for (size_t i = 0; i < r.cdf_levels.size(); ++i) {
    j["cdf"].push_back(
        {{"level_m", r.cdf_levels[i]}, {"fraction", r.cdf_values[i]}});
  }
  return j;
}

inline void write_metrics_json(const std::filesystem::path& path,
                               const MetricsReport& r) {
  atomic_write(path, metrics_to_json(r).dump(2) + "\n");
}

inline MetricsReport read_metrics_json(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  if (j.value("schema", "") != std::string("ulins-metrics-v1")) {
    throw std::runtime_error("metrics: missing or unknown schema id");
  }
  MetricsReport r;
  r.label = j.value("label", "");
  r.rmse_2d = j.value("rmse_2d_m", 0.0);
  r.rmse_3d = j.value("rmse_3d_m", 0.0);
  r.mean_error = j.value("mean_error_m", 0.0);
  r.max_error = j.value("max_error_m", 0.0);
  r.samples = j.value("samples", 0);
  if (j.contains("cdf")) {
    for (const auto& c : j.at("cdf")) {
      r.cdf_levels.push_back(c.at("level_m").get<double>());
      r.cdf_values.push_back(c.at("fraction").get<double>());
    }
  }
  return r;
}

// ---- Outlier-rejection diagnostics CSV ----

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<RansacDiagnostic>& rows) {
  std::string out = "t,anchor_id,window_size,inliers,px,py,pz,residual_sum\n";
  for (const RansacDiagnostic& d : rows) {
    out += g17(d.t) + "," + std::to_string(d.anchor_id) + "," +
           std::to_string(d.window_size) + "," + std::to_string(d.inliers);
    for (int i = 0; i < 3; ++i) out += "," + g17(d.position(i));
    out += "," + g17(d.residual_sum) + "\n";
  }
  atomic_write(path, out);
}

}  // namespace ulins
