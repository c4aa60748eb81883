#pragma once

#include <string>
#include <vector>

#include "geometry.hpp"

namespace trend {

struct EgoAction {
  double dx = 0, dy = 0, dtheta = 0;
};

// N points with d feature channels, expressed in the frame of `frame_pose`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> features;  // N * feat_dim, row major
  int feat_dim = 1;
  double timestamp = 0;
  Pose capture_pose;              // ego pose when the scan was taken
  Pose frame_pose;                // frame the coordinates currently live in
  Vec3 sensor_origin{0, 0, 0};    // sensor position in the current frame

  size_t size() const { return points.size(); }
};

// Rigid re-expression of the cloud in `target`'s frame. Features and
// timestamp are untouched.
PointCloud transform_to_frame(const PointCloud& cloud, const Pose& target);

// Keeps points with z strictly above z_thd (current-frame coordinates).
PointCloud ground_filter(const PointCloud& cloud, double z_thd);

// Binary point-cloud file: 16-byte header (magic "TRND", version u16,
// N u32, d u16, reserved), then the frame time as f64, then N rows of
// (3+d) little-endian f32.
void save_pointcloud(const PointCloud& cloud, const std::string& path);
PointCloud load_pointcloud(const std::string& path);

}  // namespace trend
