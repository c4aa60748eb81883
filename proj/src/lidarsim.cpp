#include "lidarsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "common.hpp"

namespace trend {

void SceneSpec::validate() const {
  if (sensor_height <= 0) fail_config("scene: sensor_height must be > 0");
  for (const Primitive& p : primitives) {
    if (p.size.x <= 0 || p.size.y <= 0 || p.size.z <= 0)
      fail_config("scene: degenerate primitive size");
  }
}

std::vector<Vec3> BeamPattern::directions() const {
  if (n_azimuth <= 0 || n_elevation <= 0) fail_config("beam pattern: empty scan grid");
  std::vector<Vec3> dirs;
  dirs.reserve(size_t(n_azimuth) * n_elevation);
  for (int j = 0; j < n_elevation; ++j) {
    double el = el_min + (double(j) + 0.5) * (el_max - el_min) / double(n_elevation);
    for (int i = 0; i < n_azimuth; ++i) {
      double az = -fov_h / 2 + (double(i) + 0.5) * fov_h / double(n_azimuth);
      dirs.push_back({std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)});
    }
  }
  return dirs;
}

namespace {

constexpr double kRayEps = 1e-12;

void rotate_z(double yaw, double& x, double& y) {
  double c = std::cos(yaw), s = std::sin(yaw);
  double nx = c * x + s * y;  // world -> local (inverse rotation)
  double ny = -s * x + c * y;
  x = nx;
  y = ny;
}

double ray_box(const Primitive& prim, double t, const Vec3& o, const Vec3& d) {
  Vec3 c = prim.center_at(t);
  double yaw = prim.yaw_at(t);
  double ox = o.x - c.x, oy = o.y - c.y, oz = o.z - c.z;
  double dx = d.x, dy = d.y, dz = d.z;
  rotate_z(yaw, ox, oy);
  rotate_z(yaw, dx, dy);
  double half[3] = {prim.size.x / 2, prim.size.y / 2, prim.size.z / 2};
  double ro[3] = {ox, oy, oz}, rd[3] = {dx, dy, dz};
  double tmin = -kMissRange, tmax = kMissRange;
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(rd[a]) < kRayEps) {
      if (std::fabs(ro[a]) > half[a]) return kMissRange;
      continue;
    }
    double t1 = (-half[a] - ro[a]) / rd[a];
    double t2 = (half[a] - ro[a]) / rd[a];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return kMissRange;
  }
  if (tmax < kRayEps) return kMissRange;
  return tmin > kRayEps ? tmin : tmax;
}

double ray_cylinder(const Primitive& prim, double t, const Vec3& o, const Vec3& d) {
  Vec3 c = prim.center_at(t);
  double r = prim.size.x;
  double hh = prim.size.z / 2;
  double px = o.x - c.x, py = o.y - c.y, pz = o.z - c.z;
  double best = kMissRange;
  // lateral surface
  double a = d.x * d.x + d.y * d.y;
  if (a > kRayEps) {
    double b = 2 * (px * d.x + py * d.y);
    double cc = px * px + py * py - r * r;
    double disc = b * b - 4 * a * cc;
    if (disc >= 0) {
      double sq = std::sqrt(disc);
      for (double tc : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (tc > kRayEps && tc < best && std::fabs(pz + tc * d.z) <= hh) best = tc;
      }
    }
  }
  // caps
  if (std::fabs(d.z) > kRayEps) {
    for (double zc : {-hh, hh}) {
      double tc = (zc - pz) / d.z;
      if (tc > kRayEps && tc < best) {
        double hx = px + tc * d.x, hy = py + tc * d.y;
        if (hx * hx + hy * hy <= r * r) best = tc;
      }
    }
  }
  return best;
}

double sdf_box(const Primitive& prim, double t, const Vec3& p) {
  Vec3 c = prim.center_at(t);
  double x = p.x - c.x, y = p.y - c.y, z = p.z - c.z;
  rotate_z(prim.yaw_at(t), x, y);
  double qx = std::fabs(x) - prim.size.x / 2;
  double qy = std::fabs(y) - prim.size.y / 2;
  double qz = std::fabs(z) - prim.size.z / 2;
  double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
  double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
  double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
  return outside + inside;
}

double sdf_cylinder(const Primitive& prim, double t, const Vec3& p) {
  Vec3 c = prim.center_at(t);
  double dx = p.x - c.x, dy = p.y - c.y;
  double dr = std::sqrt(dx * dx + dy * dy) - prim.size.x;
  double dz = std::fabs(p.z - c.z) - prim.size.z / 2;
  double or_ = std::max(dr, 0.0), oz = std::max(dz, 0.0);
  double outside = std::sqrt(or_ * or_ + oz * oz);
  double inside = std::min(std::max(dr, dz), 0.0);
  return outside + inside;
}

}  // namespace

std::vector<double> cast_rays(const SceneSpec& scene, double t, const Vec3& origin,
                              const std::vector<Vec3>& directions, std::vector<uint32_t>* hit_ids) {
  scene.validate();
  for (const Vec3& d : directions)
    if (std::fabs(d.norm() - 1.0) > 1e-9) fail_config("cast_rays: directions must be unit length");
  std::vector<double> ranges(directions.size(), kMissRange);
  if (hit_ids) hit_ids->assign(directions.size(), UINT32_MAX);
  parallel_for(int64_t(directions.size()), [&](int64_t i) {
    const Vec3& d = directions[size_t(i)];
    double best = kMissRange;
    uint32_t best_id = UINT32_MAX;
    if (d.z < -kRayEps && origin.z > 0) {
      double tg = -origin.z / d.z;
      if (tg > kRayEps && tg < best) {
        best = tg;
        best_id = 0;
      }
    }
    for (const Primitive& prim : scene.primitives) {
      double tp = prim.kind == Primitive::Kind::box ? ray_box(prim, t, origin, d)
                                                    : ray_cylinder(prim, t, origin, d);
      if (tp < best) {
        best = tp;
        best_id = prim.id;
      }
    }
    ranges[size_t(i)] = best;
    if (hit_ids) (*hit_ids)[size_t(i)] = best_id;
  });
  return ranges;
}

double scene_sdf(const SceneSpec& scene, double t, const Vec3& p) {
  double best = p.z;  // ground half-space
  for (const Primitive& prim : scene.primitives) {
    double d = prim.kind == Primitive::Kind::box ? sdf_box(prim, t, p) : sdf_cylinder(prim, t, p);
    best = std::min(best, d);
  }
  return best;
}

double primitive_intensity(uint32_t id) { return hash01(uint64_t(id) + 1); }

std::vector<PointCloud> generate_sequence(const SceneSpec& scene, int k, const BeamPattern& beams,
                                          const std::vector<EgoAction>& actions, double dt) {
  scene.validate();
  if (k < 1) fail_config("generate_sequence: k must be >= 1");
  if (int(actions.size()) != k - 1)
    fail_config("generate_sequence: need exactly k-1 actions, got " +
                std::to_string(actions.size()));
  std::vector<Vec3> local_dirs = beams.directions();

  std::vector<PointCloud> out;
  Pose pose{0, 0, 0, scene.sensor_height};
  for (int n = 0; n < k; ++n) {
    double t = double(n) * dt;
    Vec3 origin{pose.x, pose.y, pose.z};
    std::vector<Vec3> world_dirs(local_dirs.size());
    for (size_t i = 0; i < local_dirs.size(); ++i) world_dirs[i] = pose.dir_to_world(local_dirs[i]);
    std::vector<uint32_t> ids;
    std::vector<double> ranges = cast_rays(scene, t, origin, world_dirs, &ids);

    PointCloud cloud;
    cloud.feat_dim = 1;
    cloud.timestamp = t;
    cloud.capture_pose = pose;
    cloud.frame_pose = pose;
    cloud.sensor_origin = {0, 0, 0};
    for (size_t i = 0; i < ranges.size(); ++i) {
      if (!(ranges[i] <= beams.r_max)) continue;  // drop misses and out-of-range returns
      cloud.points.push_back(local_dirs[i] * ranges[i]);
      cloud.features.push_back(primitive_intensity(ids[i]));
    }
    out.push_back(std::move(cloud));
    if (n < k - 1) pose = pose.advanced(actions[size_t(n)].dx, actions[size_t(n)].dy,
                                       actions[size_t(n)].dtheta);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string serialize_scene(const SceneSpec& scene) {
  std::ostringstream os;
  os << "sensor_height = " << fmt(scene.sensor_height) << "\n";
  os << "seed = " << scene.seed << "\n";
  for (const Primitive& p : scene.primitives) {
    os << "primitive = " << (p.kind == Primitive::Kind::box ? "box" : "cylinder");
    for (double v : {p.center0.x, p.center0.y, p.center0.z, p.yaw0, p.size.x, p.size.y, p.size.z,
                     p.vel.x, p.vel.y, p.yaw_rate})
      os << " " << fmt(v);
    os << "\n";
  }
  return os.str();
}

SceneSpec parse_scene(const std::string& text) {
  SceneSpec scene;
  scene.primitives.clear();
  std::istringstream is(text);
  std::string line;
  uint32_t next_id = 1;
  while (std::getline(is, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::istringstream key_s(line.substr(0, eq));
    std::string key;
    key_s >> key;
    std::istringstream val_s(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "sensor_height") {
      val_s >> scene.sensor_height;
    } else if (key == "seed") {
      val_s >> scene.seed;
    } else if (key == "primitive") {
      Primitive p;
      std::string kind;
      val_s >> kind >> p.center0.x >> p.center0.y >> p.center0.z >> p.yaw0 >> p.size.x >>
          p.size.y >> p.size.z >> p.vel.x >> p.vel.y >> p.yaw_rate;
      if (val_s.fail()) fail_config("scene: malformed primitive line: " + line);
      if (kind == "box")
        p.kind = Primitive::Kind::box;
      else if (kind == "cylinder")
        p.kind = Primitive::Kind::cylinder;
      else
        fail_config("scene: unknown primitive kind '" + kind + "'");
      p.id = next_id++;
      scene.primitives.push_back(p);
    } else {
      fail_config("scene: unknown key '" + key + "'");
    }
  }
  scene.validate();
  return scene;
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open scene file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scene(ss.str());
}

void save_scene(const SceneSpec& scene, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_io("cannot open for write: " + path);
  f << serialize_scene(scene);
  if (!f) fail_io("write failed: " + path);
}

SceneSpec random_scene(uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5CE4E));
  SceneSpec scene;
  scene.seed = seed;
  int n = 2 + int(rng.uniform_int(3));
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? Primitive::Kind::box : Primitive::Kind::cylinder;
    if (p.kind == Primitive::Kind::box) {
      p.size = {rng.uniform(0.8, 3.0), rng.uniform(0.8, 3.0), rng.uniform(0.8, 2.5)};
    } else {
      double r = rng.uniform(0.3, 1.2);
      p.size = {r, r, rng.uniform(0.8, 2.5)};
    }
    p.center0 = {rng.uniform(6.0, 30.0), rng.uniform(-12.0, 12.0), p.size.z / 2};
    p.yaw0 = rng.uniform(0.0, 3.14159);
    if (rng.uniform() < 0.5) {
      p.vel = {rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0), 0};
      p.yaw_rate = rng.uniform(-0.3, 0.3);
    }
    p.id = uint32_t(i + 1);
    scene.primitives.push_back(p);
  }
  return scene;
}

std::vector<EgoAction> random_actions(uint64_t seed, int count) {
  Rng rng(mix_seed(seed, 0xAC7104));
  std::vector<EgoAction> out;
  for (int i = 0; i < count; ++i)
    out.push_back({rng.uniform(0.5, 2.0), rng.uniform(-0.2, 0.2), rng.uniform(-0.12, 0.12)});
  return out;
}

}  // namespace trend
