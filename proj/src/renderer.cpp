#include "renderer.hpp"

#include <cmath>

namespace trend {

RayBatch select_render_rays(const PointCloud& aligned, double z_thd, int n_render, uint64_t seed) {
  PointCloud kept = ground_filter(aligned, z_thd);
  RayBatch batch;
  batch.t = aligned.timestamp;
  if (kept.points.empty()) return batch;
  Rng rng(mix_seed(seed, 0x4A75));
  std::vector<int> pick =
      rng.sample_without_replacement(int(kept.points.size()), n_render);
  batch.origins.reserve(pick.size());
  batch.dirs.reserve(pick.size());
  batch.ranges.reserve(pick.size());
  for (int i : pick) {
    Vec3 delta = kept.points[size_t(i)] - kept.sensor_origin;
    double r = delta.norm();
    if (r <= 0) continue;
    batch.origins.push_back(kept.sensor_origin);
    batch.dirs.push_back(delta * (1.0 / r));
    batch.ranges.push_back(r);
  }
  return batch;
}

std::vector<double> sample_along_ray(int n_ray, double near, double far, Rng& rng) {
  if (!(near > 0) || !(far > near)) fail_config("sample_along_ray: need 0 < near < far");
  std::vector<double> out(size_t(n_ray), 0.0);
  double step = (far - near) / double(n_ray);
  for (int i = 0; i < n_ray; ++i) out[size_t(i)] = near + (double(i) + rng.uniform()) * step;
  return out;
}

diff::Value alpha_from_sdf(diff::Value sdf, diff::Value z) {
  const diff::Shape& s = sdf.shape();
  if (s.size() != 2 || s[1] < 2) fail_config("alpha_from_sdf: expected sdf[M,N], N >= 2");
  int n = s[1];
  diff::Value phi = diff::sigmoid(diff::mul_scalar(sdf, z));
  diff::Value front = diff::slice_last(phi, 0, n - 1);
  diff::Value back = diff::slice_last(phi, 1, n);
  // denominator floor keeps deeply saturated rays finite
  diff::Value denom = diff::max_const(front, 1e-12);
  return diff::max_const(diff::vdiv(diff::sub(front, back), denom), 0.0);
}

diff::Value transmittance(diff::Value alpha) { return diff::transmittance_from_alpha(alpha); }

diff::Value sharpness(ParamCtx& ctx, const RunConfig& cfg) {
  diff::Value log_z =
      ctx.param("render.log_z", {1}, Init::zeros, 0, std::log(cfg.z_init));
  return diff::vexp(log_z);
}

RenderResult render_depth(diff::Value sdf, diff::Value z, const std::vector<double>& dists,
                          double min_weight_sum) {
  const diff::Shape& s = sdf.shape();
  if (s.size() != 2) fail_config("render_depth: expected sdf[M,N]");
  int m = s[0], n = s[1];
  if (int64_t(dists.size()) != int64_t(m) * n) fail_config("render_depth: dists size mismatch");
  diff::Value alpha = alpha_from_sdf(sdf, z);
  diff::Value trans = transmittance(alpha);
  diff::Value w = diff::mul(trans, alpha);
  // weight each interval by its front sample distance (Eq. 11 with the
  // final, undefined interval carrying zero weight)
  std::vector<double> front(size_t(m) * (n - 1));
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n - 1; ++i) front[size_t(r) * (n - 1) + i] = dists[size_t(r) * n + i];
  diff::Value r_front = diff::constant(*sdf.tape, {m, n - 1}, std::move(front));
  RenderResult res;
  res.pred = diff::rowsum(diff::mul(w, r_front));
  res.weight_sum = diff::rowsum(w);
  res.included.assign(size_t(m), 0);
  for (int r = 0; r < m; ++r) {
    if (res.weight_sum.val()[size_t(r)] >= min_weight_sum) {
      res.included[size_t(r)] = 1;
      ++res.n_included;
    }
  }
  return res;
}

std::optional<diff::Value> depth_loss(const RenderResult& render, const std::vector<double>& obs) {
  int m = render.pred.shape()[0];
  if (int64_t(obs.size()) != m) fail_config("depth_loss: prediction/observation length mismatch");
  if (render.n_included == 0) return std::nullopt;
  diff::Tape& tape = *render.pred.tape;
  std::vector<double> mask(size_t(m), 0.0);
  for (int r = 0; r < m; ++r) mask[size_t(r)] = render.included[size_t(r)] ? 1.0 : 0.0;
  diff::Value obs_v = diff::constant(tape, {m}, std::vector<double>(obs.begin(), obs.end()));
  diff::Value mask_v = diff::constant(tape, {m}, std::move(mask));
  diff::Value err = diff::mul(diff::vabs(diff::sub(render.pred, obs_v)), mask_v);
  return diff::scale(diff::sum(err), 1.0 / double(render.n_included));
}

FrameRender render_batch(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                         const RayBatch& batch, uint64_t seed) {
  int m = int(batch.size());
  int n = cfg.n_ray;
  double near = cfg.near, far = cfg.effective_far();
  Rng rng(mix_seed(seed, 0x57A7));
  FrameRender fr;
  fr.dists.resize(size_t(m) * n);
  std::vector<Vec3> pts;
  pts.reserve(size_t(m) * n);
  for (int r = 0; r < m; ++r) {
    std::vector<double> dr = sample_along_ray(n, near, far, rng);
    for (int i = 0; i < n; ++i) {
      fr.dists[size_t(r) * n + i] = dr[size_t(i)];
      pts.push_back(batch.origins[size_t(r)] + batch.dirs[size_t(r)] * dr[size_t(i)]);
    }
  }
  diff::Value s = sdf_batch(ctx, cfg, grid, pts, batch.t);
  s = diff::reshape(s, {m, n});
  diff::Value z = sharpness(ctx, cfg);
  fr.result = render_depth(s, z, fr.dists, cfg.min_weight_sum);
  return fr;
}

}  // namespace trend
