#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "encoder.hpp"
#include "fdcheck.hpp"
#include "oracles.hpp"

using namespace trend;

namespace {

RunConfig micro() {
  RunConfig cfg;
  cfg.set("preset", "desk");
  cfg.grid_d = 2;
  cfg.grid_h = 4;
  cfg.grid_w = 4;
  cfg.feat_dim = 4;
  cfg.d_sin = 4;
  cfg.d_act = 3;
  cfg.enc_c1 = 3;
  cfg.enc_c2 = 4;
  cfg.act_hidden = 5;
  return cfg;
}

PointCloud cloud_at(std::initializer_list<Vec3> pts, std::initializer_list<double> feats) {
  PointCloud c;
  c.points = pts;
  c.features = feats;
  return c;
}

}  // namespace

TEST_CASE("voxelize basics") {
  GridGeom g = micro().grid();

  PointCloud empty;
  VoxelizeResult r0 = voxelize(empty, g);
  for (double v : r0.raw) CHECK(v == 0.0);

  PointCloud one = cloud_at({{10, 0, 0}}, {0.7});
  VoxelizeResult r1 = voxelize(one, g);
  int nonzero_voxels = 0;
  for (int64_t v = 0; v < g.voxels(); ++v)
    if (r1.raw[size_t(v) * 2] != 0.0) ++nonzero_voxels;
  CHECK(nonzero_voxels == 1);
  CHECK(r1.dropped == 0);

  // two points sharing a voxel: feature channel holds the mean
  PointCloud two = cloud_at({{10, 0, 0}, {10.1, 0.05, 0.05}}, {0.2, 0.4});
  VoxelizeResult r2 = voxelize(two, g);
  int64_t vox = g.voxel_index({10, 0, 0});
  REQUIRE(vox >= 0);
  CHECK(r2.raw[size_t(vox) * 2 + 1] == doctest::Approx(0.3).epsilon(1e-12));

  // outside points are dropped and counted
  PointCloud out = cloud_at({{1000, 0, 0}}, {0.5});
  VoxelizeResult r3 = voxelize(out, g);
  CHECK(r3.dropped == 1);
}

TEST_CASE("encode maps zero input to zero grid and keeps shape") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  ParamStore store(3);
  diff::Tape tape;
  ParamCtx ctx(tape, store);

  VoxelizeResult raw;
  raw.channels = 2;
  raw.raw.assign(size_t(g.voxels()) * 2, 0.0);
  diff::Value out = encode_raw_grid(ctx, cfg, raw);
  CHECK(out.shape() == diff::Shape{g.d, g.h, g.w, cfg.feat_dim});
  for (double v : out.val()) CHECK(v == 0.0);
}

TEST_CASE("encoder weight gradients pass finite differences") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  Rng rng(41);
  VoxelizeResult raw;
  raw.channels = 2;
  raw.raw.resize(size_t(g.voxels()) * 2);
  for (double& v : raw.raw) v = rng.uniform(0, 1);
  std::vector<double> probe(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : probe) v = rng.uniform(-1, 1);

  ParamStore store(19);
  FdResult res = finite_difference_check(
      store,
      [&](ParamCtx& ctx) {
        diff::Value out = encode_raw_grid(ctx, cfg, raw);
        diff::Value w = diff::constant(ctx.tape, out.shape(), probe);
        return diff::sum(diff::mul(out, w));
      },
      1e-3);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("action embedding of the zero action") {
  RunConfig cfg = micro();
  EgoAction zero{0, 0, 0};
  std::vector<double> feat = action_features(zero, cfg.d_sin, cfg.sin_base);
  REQUIRE(int(feat.size()) == cfg.d_sin + 2);
  for (int i = 0; i < cfg.d_sin; i += 2) {
    CHECK(feat[size_t(i)] == 0.0);      // sin 0
    CHECK(feat[size_t(i) + 1] == 1.0);  // cos 0
  }
  CHECK(feat[size_t(cfg.d_sin)] == 0.0);
  CHECK(feat[size_t(cfg.d_sin) + 1] == 1.0);
}

TEST_CASE("rotation feature has unit norm for any yaw") {
  Rng rng(8);
  RunConfig cfg = micro();
  for (int i = 0; i < 100; ++i) {
    EgoAction a{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3.14, 3.14)};
    std::vector<double> f = action_features(a, cfg.d_sin, cfg.sin_base);
    double s = f[size_t(cfg.d_sin)], c = f[size_t(cfg.d_sin) + 1];
    CHECK(s * s + c * c == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("action embedding matches a hand-composed forward pass") {
  RunConfig cfg = micro();
  cfg.d_sin = 4;
  cfg.act_hidden = 2;
  cfg.d_act = 2;
  ParamStore store(0);
  // fixed weights: w0 is (d_sin+2) x 2, w1 is 2 x 2
  Param& w0 = store.ensure("act.w0", {6, 2}, Init::zeros);
  Param& b0 = store.ensure("act.b0", {2}, Init::zeros);
  Param& w1 = store.ensure("act.w1", {2, 2}, Init::zeros);
  Param& b1 = store.ensure("act.b1", {2}, Init::zeros);
  for (size_t i = 0; i < w0.value.size(); ++i) w0.value[i] = 0.01 * double(i + 1);
  b0.value = {0.1, -0.2};
  w1.value = {1.0, 0.5, -0.25, 2.0};
  b1.value = {0.0, 0.3};

  EgoAction a{1.0, 0.0, 3.14159265358979323846 / 2};
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value out = embed_action(ctx, cfg, a);

  // oracle: explicit affine + relu + affine
  std::vector<double> x = action_features(a, cfg.d_sin, cfg.sin_base);
  double h[2];
  for (int j = 0; j < 2; ++j) {
    h[j] = b0.value[size_t(j)];
    for (int i = 0; i < 6; ++i) h[j] += x[size_t(i)] * w0.value[size_t(i * 2 + j)];
    h[j] = std::max(h[j], 0.0);
  }
  double y[2];
  for (int j = 0; j < 2; ++j) {
    y[j] = b1.value[size_t(j)];
    for (int i = 0; i < 2; ++i) y[j] += h[i] * w1.value[size_t(i * 2 + j)];
  }
  CHECK(out.val()[0] == doctest::Approx(y[0]).epsilon(1e-14));
  CHECK(out.val()[1] == doctest::Approx(y[1]).epsilon(1e-14));
}

TEST_CASE("recurrent step shares weights across applications") {
  RunConfig cfg = micro();
  ParamStore store(11);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  GridGeom g = cfg.grid();

  Rng rng(5);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);

  EgoAction a{0.5, 0.0, 0.1};
  diff::Value e1 = embed_action(ctx, cfg, a);
  diff::Value s1 = recurrent_step(ctx, cfg, grid, e1, a);
  std::vector<std::string> n1 = store.names();
  std::set<std::string> names_after_one(n1.begin(), n1.end());

  diff::Value e2 = embed_action(ctx, cfg, a);
  diff::Value s2 = recurrent_step(ctx, cfg, s1, e2, a);
  std::vector<std::string> n2 = store.names();
  std::set<std::string> names_after_two(n2.begin(), n2.end());

  CHECK(names_after_one == names_after_two);
  CHECK(s2.shape() == grid.shape());
  for (double v : s2.val()) CHECK(std::isfinite(v));
}

TEST_CASE("changing the action changes the rolled grid") {
  RunConfig cfg = micro();
  auto roll = [&](double dtheta) {
    ParamStore store(13);
    diff::Tape tape;
    ParamCtx ctx(tape, store);
    GridGeom g = cfg.grid();
    Rng rng(5);
    std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
    for (double& v : gv) v = rng.uniform(-1, 1);
    diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
    EgoAction a{0.5, 0.0, dtheta};
    diff::Value out = recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
    return out.val();
  };
  std::vector<double> o1 = roll(0.0), o2 = roll(0.8);
  double diff_norm = 0;
  for (size_t i = 0; i < o1.size(); ++i) diff_norm += std::fabs(o1[i] - o2[i]);
  CHECK(diff_norm > 1e-6);
}

TEST_CASE("recurrent step gradients reach grid and action parameters") {
  RunConfig cfg = micro();
  GridGeom g = cfg.grid();
  Rng rng(23);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  std::vector<double> probe(gv.size());
  for (double& v : probe) v = rng.uniform(-1, 1);
  EgoAction a{0.7, -0.2, 0.3};

  ParamStore store(29);
  store.ensure("grid_in", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros).value = gv;
  FdResult res = finite_difference_check(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid = ctx.param("grid_in", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros);
        diff::Value out = recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
        diff::Value w = diff::constant(ctx.tape, out.shape(), probe);
        return diff::sum(diff::mul(out, w));
      },
      1e-3);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-4);

  // and the analytic gradient into the action MLP is not everywhere zero
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value grid = ctx.param("grid_in", {g.d, g.h, g.w, cfg.feat_dim}, Init::zeros);
  diff::Value out = recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
  tape.backward(diff::sum(diff::mul(out, diff::constant(tape, out.shape(), probe))));
  double act_grad = 0;
  for (const auto& kv : ctx.grads())
    if (kv.first.rfind("act.", 0) == 0)
      for (double v : kv.second) act_grad += std::fabs(v);
  CHECK(act_grad > 1e-10);
}

TEST_CASE("raw action concat switch changes the first conv width") {
  RunConfig cfg = micro();
  auto first_conv_rows = [&](bool raw) {
    cfg.raw_action_concat = raw;
    ParamStore store(1);
    diff::Tape tape;
    ParamCtx ctx(tape, store);
    GridGeom g = cfg.grid();
    std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim, 0.1);
    diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
    EgoAction a{0.5, 0, 0};
    (void)recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
    return store.at("rec.conv0.w").shape[3];
  };
  CHECK(first_conv_rows(false) == cfg.d_act + cfg.feat_dim);
  CHECK(first_conv_rows(true) == 3 + cfg.feat_dim);
}

TEST_CASE("grid stays finite through k recurrent steps") {
  RunConfig cfg = micro();
  ParamStore store(31);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  GridGeom g = cfg.grid();
  Rng rng(6);
  std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim);
  for (double& v : gv) v = rng.uniform(-1, 1);
  diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
  for (int n = 0; n < 4; ++n) {
    EgoAction a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)};
    grid = recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
    for (double v : grid.val()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("mask_augment rate zero is the identity") {
  GridGeom g = micro().grid();
  PointCloud c = cloud_at({{10, 0, 0}, {12, 1, 0.5}}, {0.1, 0.2});
  PointCloud out = mask_augment(c, 0.0, 99, g);
  CHECK(out.size() == c.size());
}

TEST_CASE("mask_augment keeps at least one voxel near the rate limit") {
  GridGeom g = micro().grid();
  PointCloud c;
  // three occupied voxels
  c.points = {{5, -5, 0}, {15, 5, 0}, {25, -10, 1.0}};
  c.features = {0.1, 0.2, 0.3};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    PointCloud out = mask_augment(c, 0.99, seed, g);
    CHECK(out.size() >= 1);
  }
}

TEST_CASE("mask rate 0.9 keeps exactly 10 of 100 voxels") {
  RunConfig cfg;
  cfg.vol_min_x = 0;
  cfg.vol_max_x = 100;
  cfg.vol_min_y = -5;
  cfg.vol_max_y = 5;
  cfg.vol_min_z = -2;
  cfg.vol_max_z = 2;
  cfg.grid_w = 100;
  cfg.grid_h = 2;
  cfg.grid_d = 2;
  GridGeom g = cfg.grid();
  PointCloud c;
  for (int i = 0; i < 100; ++i) {
    c.points.push_back({double(i) + 0.5, 0.0, 0.0});  // one point per x-voxel
    c.features.push_back(0.5);
  }
  PointCloud out = mask_augment(c, 0.9, 1234, g);
  CHECK(out.size() == 10);
}

TEST_CASE("parameter name set is independent of recurrence depth") {
  RunConfig cfg = micro();
  auto names_with_steps = [&](int steps) {
    ParamStore store(77);
    diff::Tape tape;
    ParamCtx ctx(tape, store);
    GridGeom g = cfg.grid();
    std::vector<double> gv(size_t(g.voxels()) * cfg.feat_dim, 0.05);
    diff::Value grid = diff::leaf(tape, {g.d, g.h, g.w, cfg.feat_dim}, gv);
    for (int n = 0; n < steps; ++n) {
      EgoAction a{0.4, 0.0, 0.05};
      grid = recurrent_step(ctx, cfg, grid, embed_action(ctx, cfg, a), a);
    }
    return store.names();
  };
  CHECK(names_with_steps(1) == names_with_steps(3));
}
