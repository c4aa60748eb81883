#pragma once

#include <cmath>

#include "geometry.hpp"

namespace trend {

// Axis-aligned feature-grid geometry. Cell values sit at voxel centers;
// continuous grid coordinates are (gz, gy, gx) with integer = cell index.
struct GridGeom {
  Vec3 vmin{-4, -20, -2};
  Vec3 vmax{36, 20, 2};
  int d = 8, h = 32, w = 32;  // z, y, x cell counts

  Vec3 cell() const {
    return {(vmax.x - vmin.x) / double(w), (vmax.y - vmin.y) / double(h),
            (vmax.z - vmin.z) / double(d)};
  }

  // continuous grid coordinates (gz, gy, gx)
  Vec3 world_to_grid(const Vec3& p) const {
    Vec3 c = cell();
    return {(p.z - vmin.z) / c.z - 0.5, (p.y - vmin.y) / c.y - 0.5, (p.x - vmin.x) / c.x - 0.5};
  }

  // flat voxel index for binning, or -1 when outside the volume
  int64_t voxel_index(const Vec3& p) const {
    Vec3 c = cell();
    int ix = int(std::floor((p.x - vmin.x) / c.x));
    int iy = int(std::floor((p.y - vmin.y) / c.y));
    int iz = int(std::floor((p.z - vmin.z) / c.z));
    if (ix < 0 || ix >= w || iy < 0 || iy >= h || iz < 0 || iz >= d) return -1;
    return (int64_t(iz) * h + iy) * w + ix;
  }

  int64_t voxels() const { return int64_t(d) * h * w; }

  double diagonal() const {
    Vec3 e = vmax - vmin;
    return e.norm();
  }

  // normalized position in [0,1]^3 used as a field input
  Vec3 normalize(const Vec3& p) const {
    return {(p.x - vmin.x) / (vmax.x - vmin.x), (p.y - vmin.y) / (vmax.y - vmin.y),
            (p.z - vmin.z) / (vmax.z - vmin.z)};
  }
};

}  // namespace trend
