#pragma once

#include <cmath>

namespace trend {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return {x / n, y / n, z / n};
  }
};

// Planar ego pose: SE(2) on the ground plane plus a fixed sensor height.
// Local frame is sensor-centered (sensor at local origin, ground at -z).
struct Pose {
  double x = 0, y = 0, theta = 0;
  double z = 0;  // sensor height above the world ground plane

  Vec3 to_world(const Vec3& p) const {
    double c = std::cos(theta), s = std::sin(theta);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y, z + p.z};
  }
  Vec3 to_local(const Vec3& w) const {
    double c = std::cos(theta), s = std::sin(theta);
    double dx = w.x - x, dy = w.y - y;
    return {c * dx + s * dy, -s * dx + c * dy, w.z - z};
  }
  Vec3 dir_to_world(const Vec3& d) const {
    double c = std::cos(theta), s = std::sin(theta);
    return {c * d.x - s * d.y, s * d.x + c * d.y, d.z};
  }

  // Advance by a relative planar action expressed in this pose's frame.
  Pose advanced(double dx, double dy, double dtheta) const {
    double c = std::cos(theta), s = std::sin(theta);
    return {x + c * dx - s * dy, y + s * dx + c * dy, theta + dtheta, z};
  }
};

inline double deg2rad(double d) { return d * 3.14159265358979323846 / 180.0; }

}  // namespace trend
