#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdcheck.hpp"
#include "field.hpp"
#include "oracles.hpp"

using namespace trend;

namespace {

RunConfig micro() {
  RunConfig cfg;
  cfg.set("preset", "desk");
  cfg.grid_d = 2;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.feat_dim = 4;
  cfg.d_sin = 4;
  cfg.sdf_width = 8;
  cfg.sdf_hidden_layers = 2;
  return cfg;
}

diff::Value random_grid(diff::Tape& tape, const RunConfig& cfg, uint64_t seed) {
  GridGeom g = cfg.grid();
  Rng rng(seed);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  return diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
}

}  // namespace

TEST_CASE("constant grid gives a constant feature anywhere") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  ParamStore store(1);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (int64_t v = 0; v < g.voxels(); ++v)
    for (int c = 0; c < cfg.feat_dim; ++c) gv[size_t(v * cfg.feat_dim + c)] = 0.1 * (c + 1);
  diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);

  Rng rng(9);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i)
    pts.push_back({rng.uniform(g.vmin.x, g.vmax.x), rng.uniform(g.vmin.y, g.vmax.y),
                   rng.uniform(g.vmin.z, g.vmax.z)});
  diff::Value f = query_feature(ctx, cfg, grid, pts);
  for (int i = 0; i < 20; ++i)
    for (int c = 0; c < cfg.feat_dim; ++c)
      CHECK(f.val()[size_t(i * cfg.feat_dim + c)] == doctest::Approx(0.1 * (c + 1)).epsilon(1e-12));
}

TEST_CASE("voxel-center query returns the exact cell feature") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  ParamStore store(1);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value grid = random_grid(tape, cfg, 5);

  // world position of cell (iz=1, iy=2, ix=1) center
  Vec3 cell = g.cell();
  Vec3 p{g.vmin.x + (1 + 0.5) * cell.x, g.vmin.y + (2 + 0.5) * cell.y,
         g.vmin.z + (1 + 0.5) * cell.z};
  diff::Value f = query_feature(ctx, cfg, grid, {p});
  size_t off = ((size_t(1) * g.h + 2) * g.w + 1) * cfg.feat_dim;
  for (int c = 0; c < cfg.feat_dim; ++c)
    CHECK(f.val()[size_t(c)] == doctest::Approx(grid.val()[off + size_t(c)]).epsilon(1e-12));
}

TEST_CASE("query_feature matches the brute-force corner sum") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  ParamStore store(1);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value grid = random_grid(tape, cfg, 6);
  Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    // stay in the interior so clamping does not engage
    Vec3 cell = g.cell();
    Vec3 p{g.vmin.x + rng.uniform(0.5, g.w - 0.51) * cell.x,
           g.vmin.y + rng.uniform(0.5, g.h - 0.51) * cell.y,
           g.vmin.z + rng.uniform(0.5, g.d - 0.51) * cell.z};
    diff::Value f = query_feature(ctx, cfg, grid, {p});
    Vec3 gc = g.world_to_grid(p);
    std::vector<double> expect = oracle::trilinear_corner_sum(
        grid.val(), g.d, g.h, g.w, cfg.feat_dim, gc.x, gc.y, gc.z);
    for (int c = 0; c < cfg.feat_dim; ++c)
      CHECK(std::fabs(f.val()[size_t(c)] - expect[size_t(c)]) < 1e-12);
  }
}

TEST_CASE("sdf returns one scalar per query") {
  RunConfig cfg = micro();
  ParamStore store(3);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value grid = random_grid(tape, cfg, 7);
  std::vector<Vec3> pts = {{5, 0, 0}, {10, 3, 0.5}, {20, -6, -1}};
  diff::Value s = sdf_batch(ctx, cfg, grid, pts, 0.5);
  CHECK(s.shape() == diff::Shape{3});
  for (double v : s.val()) CHECK(std::isfinite(v));
}

TEST_CASE("timestamp conditions the field") {
  RunConfig cfg = micro();
  std::vector<Vec3> pts = {{5, 0, 0}, {12, 2, 0.3}};
  auto eval_at = [&](double t, bool temporal) {
    RunConfig c2 = cfg;
    c2.temporal_field = temporal;
    ParamStore store(31);
    diff::Tape tape;
    ParamCtx ctx(tape, store);
    diff::Value grid = random_grid(tape, c2, 7);
    return sdf_batch(ctx, c2, grid, pts, t).val();
  };
  std::vector<double> s0 = eval_at(0.0, true), s1 = eval_at(0.5, true);
  double delta = 0;
  for (size_t i = 0; i < s0.size(); ++i) delta += std::fabs(s0[i] - s1[i]);
  CHECK(delta > 1e-8);  // t channel is live for generic weights

  std::vector<double> n0 = eval_at(0.0, false), n1 = eval_at(0.5, false);
  for (size_t i = 0; i < n0.size(); ++i) CHECK(n0[i] == n1[i]);  // no t path at all
}

TEST_CASE("time gradient path is nonzero when temporal conditioning is on") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  ParamStore store(33);
  Rng rng(4);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  store.ensure("grid", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros).value = gv;
  store.ensure("t", {1}, Init::zeros).value = {0.4};

  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value grid = ctx.param("grid", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros);
  diff::Value t = ctx.param("t", {1}, Init::zeros);
  const int B = 3;
  diff::Value coords = diff::constant(tape, {B, 3}, {0.4, 1.0, 1.1, 0.8, 0.3, 0.7, 0.2, 1.6, 1.9});
  diff::Value p_norm = diff::constant(tape, {B, 3}, {0.1, 0.2, 0.3, 0.5, 0.5, 0.5, 0.9, 0.1, 0.4});
  diff::Value t_enc = diff::tile_rows(diff::sincos_encode(t, cfg.d_sin, cfg.sin_base), B);
  diff::Value s = sdf_batch_nodes(ctx, cfg, grid, coords, p_norm, t_enc);
  tape.backward(diff::sum(s));
  const auto grads = ctx.grads();
  double tg = 0;
  for (double v : grads.at("t")) tg += std::fabs(v);
  CHECK(tg > 1e-10);
}

TEST_CASE("field gradients pass finite differences") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  Rng rng(12);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  const int B = 4;
  std::vector<double> coords(size_t(B) * 3), p_norm(size_t(B) * 3), probe(size_t(B), 0.0);
  for (int b = 0; b < B; ++b) {
    coords[size_t(b) * 3 + 0] = rng.uniform(0.1, g.d - 1.1);
    coords[size_t(b) * 3 + 1] = rng.uniform(0.1, g.h - 1.1);
    coords[size_t(b) * 3 + 2] = rng.uniform(0.1, g.w - 1.1);
    for (int a = 0; a < 3; ++a) p_norm[size_t(b) * 3 + a] = rng.uniform(0, 1);
    probe[size_t(b)] = rng.uniform(-1, 1);
  }

  ParamStore store(41);
  store.ensure("grid", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros).value = gv;
  store.ensure("coords", {B, 3}, Init::zeros).value = coords;
  store.ensure("t", {1}, Init::zeros).value = {0.7};
  FdResult res = finite_difference_check(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid = ctx.param("grid", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros);
        diff::Value c = ctx.param("coords", {B, 3}, Init::zeros);
        diff::Value t = ctx.param("t", {1}, Init::zeros);
        diff::Value pn = diff::constant(ctx.tape, {B, 3}, p_norm);
        diff::Value te = diff::tile_rows(diff::sincos_encode(t, cfg.d_sin, cfg.sin_base), B);
        diff::Value s = sdf_batch_nodes(ctx, cfg, grid, c, pn, te);
        diff::Value w = diff::constant(ctx.tape, {B}, probe);
        return diff::sum(diff::mul(s, w));
      },
      1e-3);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("far-away voxels do not affect a local query") {
  RunConfig cfg = micro();
  cfg.grid_d = 3;
  cfg.grid_h = 4;
  cfg.grid_w = 4;
  GridGeom g = cfg.grid();
  ParamStore store(1);
  diff::Tape tape;
  ParamCtx ctx(tape, store);

  Rng rng(15);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);

  // query inside cell (0..1, 0..1, 0..1)
  Vec3 cell = g.cell();
  Vec3 p{g.vmin.x + 0.9 * cell.x, g.vmin.y + 0.9 * cell.y, g.vmin.z + 0.9 * cell.z};

  diff::Value grid1 = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
  diff::Value f1 = query_feature(ctx, cfg, grid1, {p});

  // perturb a voxel more than one cell away
  std::vector<double> gv2 = gv;
  size_t far_off = ((size_t(2) * g.h + 3) * g.w + 3) * cfg.feat_dim;
  for (int c = 0; c < cfg.feat_dim; ++c) gv2[far_off + size_t(c)] += 100.0;
  diff::Value grid2 = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv2);
  diff::Value f2 = query_feature(ctx, cfg, grid2, {p});

  for (int c = 0; c < cfg.feat_dim; ++c)
    CHECK(f1.val()[size_t(c)] == f2.val()[size_t(c)]);
}

TEST_CASE("temporal toggle changes the field input width") {
  RunConfig cfg = micro();
  auto first_width = [&](bool temporal) {
    RunConfig c2 = cfg;
    c2.temporal_field = temporal;
    ParamStore store(2);
    diff::Tape tape;
    ParamCtx ctx(tape, store);
    diff::Value grid = random_grid(tape, c2, 3);
    (void)sdf_batch(ctx, c2, grid, {{5, 0, 0}}, 0.0);
    return store.at("sdf.w0").shape[0];
  };
  CHECK(first_width(true) == 3 + cfg.d_sin + cfg.feat_dim);
  CHECK(first_width(false) == 3 + cfg.feat_dim);
}
