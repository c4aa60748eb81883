#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pointcloud.hpp"

namespace trend {

// Rigid primitive moving at constant linear velocity and yaw rate.
// Boxes use size as full extents; cylinders use size.x as radius and
// size.z as full height (vertical axis).
struct Primitive {
  enum class Kind { box, cylinder };
  Kind kind = Kind::box;
  Vec3 size{1, 1, 1};
  Vec3 center0{0, 0, 0};
  double yaw0 = 0;
  Vec3 vel{0, 0, 0};  // m/s, z component ignored
  double yaw_rate = 0;
  uint32_t id = 0;

  Vec3 center_at(double t) const { return {center0.x + vel.x * t, center0.y + vel.y * t, center0.z}; }
  double yaw_at(double t) const { return yaw0 + yaw_rate * t; }
};

// World description: moving primitives over an infinite ground plane at z=0.
struct SceneSpec {
  std::vector<Primitive> primitives;
  double sensor_height = 1.6;
  uint64_t seed = 0;

  void validate() const;
};

// Azimuth x elevation scan grid, forward facing (+x), angles in radians.
struct BeamPattern {
  int n_azimuth = 32;
  int n_elevation = 16;
  double fov_h = deg2rad(120.0);
  double el_min = deg2rad(-20.0);
  double el_max = deg2rad(4.0);
  double r_max = 40.0;

  std::vector<Vec3> directions() const;  // unit vectors in the ego frame
};

constexpr double kMissRange = std::numeric_limits<double>::infinity();

// Nearest positive intersection per ray against the scene at time t,
// in world coordinates. Misses return kMissRange. hit_ids (optional)
// receives 0 for ground, primitive id otherwise, and UINT32_MAX on miss.
std::vector<double> cast_rays(const SceneSpec& scene, double t, const Vec3& origin,
                              const std::vector<Vec3>& directions,
                              std::vector<uint32_t>* hit_ids = nullptr);

// Exact signed distance to the union of ground plane and primitives at
// time t (world coordinates, exact for points outside the union).
double scene_sdf(const SceneSpec& scene, double t, const Vec3& p);

// Intensity surrogate carried in the cloud feature channel.
double primitive_intensity(uint32_t id);

// Scans the moving scene at k timestamps spaced dt apart, integrating the
// ego pose from the k-1 actions. Clouds come back in their capture frames.
std::vector<PointCloud> generate_sequence(const SceneSpec& scene, int k, const BeamPattern& beams,
                                          const std::vector<EgoAction>& actions, double dt);

// key=value text round trip for scene descriptions
std::string serialize_scene(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);
SceneSpec load_scene(const std::string& path);
void save_scene(const SceneSpec& scene, const std::string& path);

// Procedural desk-scale scene: a few boxes/cylinders in front of the sensor.
SceneSpec random_scene(uint64_t seed);
std::vector<EgoAction> random_actions(uint64_t seed, int count);

}  // namespace trend
