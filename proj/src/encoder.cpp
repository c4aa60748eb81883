#include "encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace trend {

VoxelizeResult voxelize(const PointCloud& cloud, const GridGeom& geom) {
  VoxelizeResult res;
  res.channels = 1 + cloud.feat_dim;
  res.raw.assign(size_t(geom.voxels()) * res.channels, 0.0);
  std::vector<int32_t> counts(size_t(geom.voxels()), 0);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    int64_t v = geom.voxel_index(cloud.points[i]);
    if (v < 0) {
      ++res.dropped;
      continue;
    }
    ++counts[size_t(v)];
    for (int c = 0; c < cloud.feat_dim; ++c)
      res.raw[size_t(v) * res.channels + 1 + c] += cloud.features[i * size_t(cloud.feat_dim) + c];
  }
  for (int64_t v = 0; v < geom.voxels(); ++v) {
    int32_t n = counts[size_t(v)];
    if (n == 0) continue;
    res.raw[size_t(v) * res.channels] = double(n) / double(1 + n);
    for (int c = 0; c < cloud.feat_dim; ++c) res.raw[size_t(v) * res.channels + 1 + c] /= double(n);
  }
  return res;
}

std::vector<double> action_features(const EgoAction& a, int d_sin, double base) {
  std::vector<double> out(size_t(d_sin) + 2);
  double xy[2] = {a.dx, a.dy};
  diff::sincos_encode_raw(xy, 2, d_sin, base, out.data());
  out[size_t(d_sin)] = std::sin(a.dtheta);
  out[size_t(d_sin) + 1] = std::cos(a.dtheta);
  return out;
}

diff::Value encode_raw_grid(ParamCtx& ctx, const RunConfig& cfg, const VoxelizeResult& raw) {
  GridGeom g = cfg.grid();
  if (int64_t(raw.raw.size()) != g.voxels() * raw.channels)
    fail_config("encode: raw grid size does not match grid geometry");
  diff::Value x = diff::constant(ctx.tape, {g.d, g.h, g.w, raw.channels}, raw.raw);
  int chans[4] = {raw.channels, cfg.enc_c1, cfg.enc_c2, cfg.feat_dim};
  diff::Value h = x;
  for (int l = 0; l < 3; ++l) {
    int ci = chans[l], co = chans[l + 1];
    diff::Value k = ctx.param("enc.conv" + std::to_string(l) + ".w", {3, 3, 3, ci, co},
                              Init::uniform_fan_in, 27 * ci);
    diff::Value b =
        ctx.param("enc.conv" + std::to_string(l) + ".b", {co}, Init::zeros);
    h = diff::max_const(diff::conv3d(h, k, b), 0.0);
  }
  return h;
}

diff::Value embed_action(ParamCtx& ctx, const RunConfig& cfg, const EgoAction& a) {
  std::vector<double> feat = action_features(a, cfg.d_sin, cfg.sin_base);
  diff::Value x = diff::constant(ctx.tape, {1, int(feat.size())}, feat);
  MlpSpec spec = MlpSpec::make({int(feat.size()), cfg.act_hidden, cfg.d_act}, Act::relu, Act::none);
  diff::Value y = mlp_forward(ctx, spec, "act", x);
  return diff::reshape(y, {cfg.d_act});
}

diff::Value recurrent_step(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                           diff::Value act_embed, const EgoAction& raw_action) {
  GridGeom g = cfg.grid();
  diff::Value act_vec = act_embed;
  if (cfg.raw_action_concat) {
    act_vec = diff::constant(ctx.tape, {3}, {raw_action.dx, raw_action.dy, raw_action.dtheta});
  }
  int d_act = act_vec.shape()[0];
  diff::Value tiled = diff::broadcast_grid(act_vec, g.d, g.h, g.w);
  diff::Value x = diff::concat_last(tiled, grid);
  int c_in = d_act + cfg.feat_dim;
  diff::Value k0 =
      ctx.param("rec.conv0.w", {3, 3, 3, c_in, cfg.feat_dim}, Init::uniform_fan_in, 27 * c_in);
  diff::Value b0 = ctx.param("rec.conv0.b", {cfg.feat_dim}, Init::zeros);
  diff::Value h = diff::max_const(diff::conv3d(x, k0, b0), 0.0);
  diff::Value k1 = ctx.param("rec.conv1.w", {3, 3, 3, cfg.feat_dim, cfg.feat_dim},
                             Init::uniform_fan_in, 27 * cfg.feat_dim);
  diff::Value b1 = ctx.param("rec.conv1.b", {cfg.feat_dim}, Init::zeros);
  return diff::conv3d(h, k1, b1);
}

PointCloud mask_augment(const PointCloud& cloud, double rate, uint64_t seed,
                        const GridGeom& geom) {
  if (rate < 0 || rate >= 1) fail_config("mask_augment: rate must be in [0,1)");
  if (rate == 0 || cloud.points.empty()) return cloud;

  // occupied voxels in first-seen order; out-of-volume points get their own
  // bins so masking still applies to them
  std::map<int64_t, int> voxel_slot;
  std::vector<int> point_slot(cloud.points.size());
  Vec3 c = geom.cell();
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    int64_t key = geom.voxel_index(p);
    if (key < 0) {
      int64_t ix = int64_t(std::floor((p.x - geom.vmin.x) / c.x));
      int64_t iy = int64_t(std::floor((p.y - geom.vmin.y) / c.y));
      int64_t iz = int64_t(std::floor((p.z - geom.vmin.z) / c.z));
      key = -(((iz * 73856093) ^ (iy * 19349663) ^ (ix * 83492791)) & 0x7FFFFFFFFFFFLL) - 2;
    }
    auto it = voxel_slot.find(key);
    if (it == voxel_slot.end()) it = voxel_slot.emplace(key, int(voxel_slot.size())).first;
    point_slot[i] = it->second;
  }

  int n_vox = int(voxel_slot.size());
  int n_drop = int(std::floor(rate * double(n_vox)));
  if (n_drop <= 0) return cloud;

  Rng rng(mix_seed(seed, 0x3A5C));
  std::vector<int> dropped_idx = rng.sample_without_replacement(n_vox, n_drop);
  std::vector<uint8_t> dropped(size_t(n_vox), 0);
  for (int d : dropped_idx) dropped[size_t(d)] = 1;

  PointCloud out;
  out.feat_dim = cloud.feat_dim;
  out.timestamp = cloud.timestamp;
  out.capture_pose = cloud.capture_pose;
  out.frame_pose = cloud.frame_pose;
  out.sensor_origin = cloud.sensor_origin;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    if (dropped[size_t(point_slot[i])]) continue;
    out.points.push_back(cloud.points[i]);
    for (int c = 0; c < cloud.feat_dim; ++c)
      out.features.push_back(cloud.features[i * size_t(cloud.feat_dim) + c]);
  }
  return out;
}

}  // namespace trend
