#pragma once

#include <optional>

#include "config.hpp"
#include "field.hpp"
#include "pointcloud.hpp"

namespace trend {

// Rays to render against one frame: per-ray origin, unit direction and the
// observed range, all in the aligned frame.
struct RayBatch {
  std::vector<Vec3> origins;
  std::vector<Vec3> dirs;
  std::vector<double> ranges;
  double t = 0;

  size_t size() const { return dirs.size(); }
  bool empty() const { return dirs.empty(); }
};

// Ground-filters the cloud, then uniformly picks min(n_render, available)
// points without replacement. Empty result is the skip-frame signal.
RayBatch select_render_rays(const PointCloud& aligned, double z_thd, int n_render, uint64_t seed);

// Stratified distances: one uniform draw in each of n_ray equal slices of
// [near, far]; strictly increasing.
std::vector<double> sample_along_ray(int n_ray, double near, double far, Rng& rng);

// Eq-level pieces, exposed for direct testing.
// alpha_n = max((phi(s_n) - phi(s_{n+1})) / phi(s_n), 0) with phi the
// sigmoid sharpened by the scalar node z; [M,N] -> [M,N-1].
diff::Value alpha_from_sdf(diff::Value sdf, diff::Value z);
// T_n = prod_{i<n} (1 - alpha_i); same shape as alpha.
diff::Value transmittance(diff::Value alpha);

struct RenderResult {
  diff::Value pred;        // [M] predicted range per ray
  diff::Value weight_sum;  // [M]
  std::vector<uint8_t> included;  // weight_sum >= min_weight_sum
  int n_included = 0;
};

// Depth rendering from per-sample SDF values. sdf is [M,N]; dists holds the
// M*N strictly increasing sample distances that produced it.
RenderResult render_depth(diff::Value sdf, diff::Value z, const std::vector<double>& dists,
                          double min_weight_sum);

// Mean absolute range error over included rays. Empty effective batch
// returns nullopt (skip-frame).
std::optional<diff::Value> depth_loss(const RenderResult& render, const std::vector<double>& obs);

// Full differentiable path for one frame: sample, query the field, render.
struct FrameRender {
  RenderResult result;
  std::vector<double> dists;  // M*N sample distances
};
FrameRender render_batch(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                         const RayBatch& batch, uint64_t seed);

// The learnable sharpness z > 0, log-parameterized.
diff::Value sharpness(ParamCtx& ctx, const RunConfig& cfg);

}  // namespace trend
