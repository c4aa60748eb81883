// Test-side reference implementations, kept independent of the library's
// computation paths on purpose.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "common.hpp"
#include "lidarsim.hpp"

namespace trend::oracle {

// Sphere tracing over the exact scene SDF; the geometric cross-check for
// the analytic ray caster.
struct TraceResult {
  bool hit = false;
  double range = 0;
};

inline TraceResult sphere_trace(const SceneSpec& scene, double time, const Vec3& origin,
                                const Vec3& dir, double t_max = 300.0, double eps = 1e-10,
                                int max_steps = 2000000) {
  double t = 0;
  for (int i = 0; i < max_steps; ++i) {
    Vec3 p = origin + dir * t;
    double d = scene_sdf(scene, time, p);
    if (d < eps) return {true, t};
    t += d;
    if (t > t_max) return {false, 0};
  }
  return {false, 0};
}

// Dense midpoint evaluation of the occupancy/transmittance/weight chain for
// a single ray with a caller-supplied SDF profile.
inline double render_depth_dense(const std::function<double(double)>& sdf_of_r, double z,
                                 double near, double far, int n) {
  auto phi = [z](double s) { return 1.0 / (1.0 + std::exp(-z * s)); };
  std::vector<double> r(n), s(n);
  for (int i = 0; i < n; ++i) {
    r[size_t(i)] = near + (double(i) + 0.5) * (far - near) / double(n);
    s[size_t(i)] = sdf_of_r(r[size_t(i)]);
  }
  double transmittance = 1.0;
  double depth = 0;
  for (int i = 0; i + 1 < n; ++i) {
    double alpha =
        std::max((phi(s[size_t(i)]) - phi(s[size_t(i) + 1])) / std::max(phi(s[size_t(i)]), 1e-12), 0.0);
    depth += transmittance * alpha * r[size_t(i)];
    transmittance *= (1.0 - alpha);
  }
  return depth;
}

// Brute-force 8-corner weighted sum for one query point in grid coords.
inline std::vector<double> trilinear_corner_sum(const std::vector<double>& grid, int D, int H,
                                                int W, int C, double gz, double gy, double gx) {
  int iz = std::min(int(std::floor(gz)), D - 2);
  int iy = std::min(int(std::floor(gy)), H - 2);
  int ix = std::min(int(std::floor(gx)), W - 2);
  iz = std::max(iz, 0);
  iy = std::max(iy, 0);
  ix = std::max(ix, 0);
  double fz = gz - iz, fy = gy - iy, fx = gx - ix;
  std::vector<double> out(size_t(C), 0.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        double w = (a ? fz : 1 - fz) * (b ? fy : 1 - fy) * (c ? fx : 1 - fx);
        for (int ch = 0; ch < C; ++ch)
          out[size_t(ch)] +=
              w * grid[(((size_t(iz + a) * H) + (iy + b)) * W + (ix + c)) * C + ch];
      }
  return out;
}

// Hand-stepped Adam recurrence for a single scalar chain.
struct AdamOracleState {
  double m = 0, v = 0;
};

inline double adam_oracle_step(AdamOracleState& st, double theta, double g, double lr, int t,
                               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  st.m = beta1 * st.m + (1 - beta1) * g;
  st.v = beta2 * st.v + (1 - beta2) * g * g;
  double mh = st.m / (1 - std::pow(beta1, t));
  double vh = st.v / (1 - std::pow(beta2, t));
  return theta - lr * mh / (std::sqrt(vh) + eps);
}

}  // namespace trend::oracle
