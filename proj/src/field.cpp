#include "field.hpp"

namespace trend {

namespace {

std::vector<double> grid_coord_rows(const GridGeom& g, const std::vector<Vec3>& points) {
  std::vector<double> rows;
  rows.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    Vec3 c = g.world_to_grid(p);
    rows.push_back(c.x);  // gz
    rows.push_back(c.y);  // gy
    rows.push_back(c.z);  // gx
  }
  return rows;
}

MlpSpec sdf_spec(const RunConfig& cfg, int in_width) {
  std::vector<int> widths;
  widths.push_back(in_width);
  for (int i = 0; i < cfg.sdf_hidden_layers; ++i) widths.push_back(cfg.sdf_width);
  widths.push_back(1);
  return MlpSpec::make(std::move(widths), Act::softplus, Act::none);
}

}  // namespace

diff::Value query_feature(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                          const std::vector<Vec3>& points) {
  GridGeom g = cfg.grid();
  diff::Value coords =
      diff::constant(ctx.tape, {int(points.size()), 3}, grid_coord_rows(g, points));
  return diff::trilinear(grid, coords, /*clamp=*/true);
}

diff::Value sdf_batch_nodes(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                            diff::Value grid_coords, diff::Value p_norm, diff::Value t_enc) {
  diff::Value feat = diff::trilinear(grid, grid_coords, /*clamp=*/true);
  diff::Value x = p_norm;
  if (cfg.temporal_field) x = diff::concat_last(x, t_enc);
  x = diff::concat_last(x, feat);
  int in_width = 3 + (cfg.temporal_field ? cfg.d_sin : 0) + cfg.feat_dim;
  diff::Value s = mlp_forward(ctx, sdf_spec(cfg, in_width), "sdf", x, /*final_bias_fill=*/0.5);
  int b = x.shape()[0];
  return diff::reshape(s, {b});
}

diff::Value sdf_batch(ParamCtx& ctx, const RunConfig& cfg, diff::Value grid,
                      const std::vector<Vec3>& points, double t) {
  GridGeom g = cfg.grid();
  int b = int(points.size());
  diff::Value coords = diff::constant(ctx.tape, {b, 3}, grid_coord_rows(g, points));
  std::vector<double> norm_rows;
  norm_rows.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    Vec3 n = g.normalize(p);
    norm_rows.push_back(n.x);
    norm_rows.push_back(n.y);
    norm_rows.push_back(n.z);
  }
  diff::Value p_norm = diff::constant(ctx.tape, {b, 3}, norm_rows);
  diff::Value t_enc{&ctx.tape, -1};
  if (cfg.temporal_field) {
    std::vector<double> row(size_t(cfg.d_sin));
    diff::sincos_encode_raw(&t, 1, cfg.d_sin, cfg.sin_base, row.data());
    std::vector<double> tiled(size_t(b) * cfg.d_sin);
    for (int i = 0; i < b; ++i)
      std::copy(row.begin(), row.end(), tiled.begin() + size_t(i) * cfg.d_sin);
    t_enc = diff::constant(ctx.tape, {b, cfg.d_sin}, std::move(tiled));
  }
  return sdf_batch_nodes(ctx, cfg, grid, coords, p_norm, t_enc);
}

}  // namespace trend
