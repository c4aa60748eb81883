#pragma once

#include "config.hpp"
#include "mlp.hpp"
#include "pointcloud.hpp"

namespace trend {

struct VoxelizeResult {
  std::vector<double> raw;  // [D,H,W,1+d]: occupancy then per-voxel feature means
  int channels = 0;
  int64_t dropped = 0;  // points outside the volume
};

// Per-voxel occupancy (count/(1+count)) plus mean features; empty voxels stay zero.
VoxelizeResult voxelize(const PointCloud& cloud, const GridGeom& geom);

// Parameter-free initial action embedding: sinusoidal translation features
// plus [sin, cos] of the yaw change; length d_sin + 2.
std::vector<double> action_features(const EgoAction& a, int d_sin, double base);

// f^enc: dense 3-D conv stack from the raw voxel grid to feat_dim channels.
diff::Value encode_raw_grid(ParamCtx& ctx, const RunConfig& cfg, const VoxelizeResult& raw);

// f^act: MLP from action_features to a d_act embedding.
diff::Value embed_action(ParamCtx& ctx, const RunConfig& cfg, const EgoAction& a);

// f^3D: one recurrent step; broadcasts the action embedding over the grid,
// concatenates on channels and applies the shared two-layer conv.
// With cfg.raw_action_concat the raw 3-vector is broadcast instead.
diff::Value recurrent_step(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                           diff::Value act_embed, const EgoAction& raw_action);

// Drops a rate-fraction of occupied voxels (all points inside them).
// Training targets must keep using the unmasked cloud.
PointCloud mask_augment(const PointCloud& cloud, double rate, uint64_t seed,
                        const GridGeom& geom);

}  // namespace trend
