#include "gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "fdcheck.hpp"
#include "renderer.hpp"
#include "trainer.hpp"

namespace trend {

namespace {

constexpr double kTol = 1e-4;

FdResult fd_run(ParamStore& store, const LossBuilder& build, double step,
                const std::string& fault) {
  return finite_difference_check(store, build, step, fault, kTol);
}

RunConfig micro_config(const RunConfig& cfg) {
  RunConfig m = cfg;
  m.grid_d = 2;
  m.grid_h = 3;
  m.grid_w = 3;
  m.feat_dim = 4;
  m.d_sin = 4;
  m.d_act = 3;
  m.enc_c1 = 3;
  m.enc_c2 = 4;
  m.act_hidden = 5;
  m.sdf_width = 8;
  m.sdf_hidden_layers = 2;
  m.n_ray = 8;
  m.n_render = 4;
  m.min_weight_sum = 0.0;  // keeps the loss mask fixed under perturbation
  m.mask_rate = 0.0;
  return m;
}

void set_param(ParamStore& store, const std::string& name, diff::Shape shape,
               std::vector<double> values) {
  Param& p = store.ensure(name, std::move(shape), Init::zeros);
  p.value = std::move(values);
}

std::vector<double> random_vec(Rng& rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// ---- instances -----------------------------------------------------------

FdResult check_sincos(const RunConfig& cfg, uint64_t seed) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 1));
  set_param(store, "x", {2}, random_vec(rng, 2, -2.0, 2.0));
  std::vector<double> c = random_vec(rng, 8, -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value x = ctx.param("x", {2}, Init::zeros);
        diff::Value e = diff::sincos_encode(x, 8, 100.0);
        diff::Value w = diff::constant(ctx.tape, {8}, c);
        return diff::sum(diff::mul(e, w));
      },
      cfg.fd_step, cfg.fault_op);
}

FdResult check_trilinear(const RunConfig& cfg, uint64_t seed) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 2));
  const int D = 2, H = 3, W = 3, C = 2, B = 5;
  set_param(store, "grid", {D, H, W, C}, random_vec(rng, size_t(D * H * W * C), -1.0, 1.0));
  std::vector<double> pts(size_t(B) * 3);
  for (int b = 0; b < B; ++b) {
    pts[size_t(b) * 3 + 0] = rng.uniform(0.1, D - 1.1);
    pts[size_t(b) * 3 + 1] = rng.uniform(0.1, H - 1.1);
    pts[size_t(b) * 3 + 2] = rng.uniform(0.1, W - 1.1);
  }
  set_param(store, "pts", {B, 3}, pts);
  std::vector<double> c = random_vec(rng, size_t(B) * C, -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid = ctx.param("grid", {D, H, W, C}, Init::zeros);
        diff::Value p = ctx.param("pts", {B, 3}, Init::zeros);
        diff::Value f = diff::trilinear(grid, p);
        diff::Value w = diff::constant(ctx.tape, {B, C}, c);
        return diff::sum(diff::mul(f, w));
      },
      cfg.fd_step, cfg.fault_op);
}

FdResult check_field(const RunConfig& micro, uint64_t seed) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 3));
  GridGeom g = micro.grid();
  const int B = 6;
  int C = micro.feat_dim;
  set_param(store, "grid", {g.d, g.h, g.w, C}, random_vec(rng, size_t(g.voxels()) * C, -1.0, 1.0));
  std::vector<double> coords(size_t(B) * 3);
  for (int b = 0; b < B; ++b) {
    coords[size_t(b) * 3 + 0] = rng.uniform(0.1, g.d - 1.1);
    coords[size_t(b) * 3 + 1] = rng.uniform(0.1, g.h - 1.1);
    coords[size_t(b) * 3 + 2] = rng.uniform(0.1, g.w - 1.1);
  }
  set_param(store, "coords", {B, 3}, coords);
  set_param(store, "p_norm", {B, 3}, random_vec(rng, size_t(B) * 3, 0.0, 1.0));
  set_param(store, "t", {1}, {rng.uniform(0.0, 1.5)});
  std::vector<double> c = random_vec(rng, size_t(B), -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid = ctx.param("grid", {g.d, g.h, g.w, C}, Init::zeros);
        diff::Value coords_v = ctx.param("coords", {B, 3}, Init::zeros);
        diff::Value p_norm = ctx.param("p_norm", {B, 3}, Init::zeros);
        diff::Value t = ctx.param("t", {1}, Init::zeros);
        diff::Value t_enc{&ctx.tape, -1};
        if (micro.temporal_field)
          t_enc = diff::tile_rows(diff::sincos_encode(t, micro.d_sin, micro.sin_base), B);
        diff::Value s = sdf_batch_nodes(ctx, micro, grid, coords_v, p_norm, t_enc);
        diff::Value w = diff::constant(ctx.tape, {B}, c);
        return diff::sum(diff::mul(s, w));
      },
      micro.fd_step, micro.fault_op);
}

std::vector<double> increasing_dists(Rng& rng, int m, int n, double near, double far) {
  std::vector<double> d(size_t(m) * n);
  double step = (far - near) / double(n);
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n; ++i)
      d[size_t(r) * n + i] = near + (double(i) + rng.uniform()) * step;
  return d;
}

FdResult check_render_eqs(const RunConfig& cfg, uint64_t seed, bool with_loss) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, with_loss ? 5 : 4));
  const int M = 3, N = 8;
  set_param(store, "s", {M, N}, random_vec(rng, size_t(M) * N, -1.2, 1.2));
  set_param(store, "log_z", {1}, {std::log(rng.uniform(2.0, 6.0))});
  std::vector<double> dists = increasing_dists(rng, M, N, 0.4, 4.0);
  std::vector<double> obs = random_vec(rng, size_t(M), 0.5, 3.5);
  std::vector<double> c = random_vec(rng, size_t(M), -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value s = ctx.param("s", {M, N}, Init::zeros);
        diff::Value z = diff::vexp(ctx.param("log_z", {1}, Init::zeros));
        RenderResult rr = render_depth(s, z, dists, 0.0);
        if (with_loss) return *depth_loss(rr, obs);
        diff::Value w = diff::constant(ctx.tape, {M}, c);
        return diff::sum(diff::mul(rr.pred, w));
      },
      cfg.fd_step, cfg.fault_op);
}

FdResult check_encoder(const RunConfig& micro, uint64_t seed) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 6));
  GridGeom g = micro.grid();
  VoxelizeResult raw;
  raw.channels = 2;
  raw.raw = random_vec(rng, size_t(g.voxels()) * 2, 0.0, 1.0);
  std::vector<double> c = random_vec(rng, size_t(g.voxels()) * micro.feat_dim, -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value out = encode_raw_grid(ctx, micro, raw);
        diff::Value w = diff::constant(ctx.tape, out.shape(), c);
        return diff::sum(diff::mul(out, w));
      },
      micro.fd_step, micro.fault_op);
}

FdResult check_recurrent(const RunConfig& micro, uint64_t seed) {
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 7));
  GridGeom g = micro.grid();
  int C = micro.feat_dim;
  set_param(store, "grid_in", {g.d, g.h, g.w, C},
            random_vec(rng, size_t(g.voxels()) * C, -1.0, 1.0));
  EgoAction a{0.7, -0.2, 0.3};
  std::vector<double> c = random_vec(rng, size_t(g.voxels()) * C, -1.0, 1.0);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid = ctx.param("grid_in", {g.d, g.h, g.w, C}, Init::zeros);
        diff::Value act = embed_action(ctx, micro, a);
        diff::Value out = recurrent_step(ctx, micro, grid, act, a);
        diff::Value w = diff::constant(ctx.tape, out.shape(), c);
        return diff::sum(diff::mul(out, w));
      },
      micro.fd_step, micro.fault_op);
}

FdResult check_pipeline(const RunConfig& cfg, uint64_t seed) {
  RunConfig micro = micro_config(cfg);
  micro.feat_dim = 3;
  micro.enc_c1 = 2;
  micro.enc_c2 = 3;
  micro.sdf_width = 6;
  micro.n_ray = 6;
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 8));

  GridGeom g = micro.grid();
  PointCloud cloud;
  cloud.feat_dim = 1;
  for (int i = 0; i < 10; ++i) {
    Vec3 p{rng.uniform(g.vmin.x + 2, g.vmax.x - 2), rng.uniform(g.vmin.y + 2, g.vmax.y - 2),
           rng.uniform(g.vmin.z + 0.5, g.vmax.z - 0.5)};
    cloud.points.push_back(p);
    cloud.features.push_back(rng.uniform(0.0, 1.0));
  }
  EgoAction action{0.5, 0.1, 0.05};

  RayBatch rays0, rays1;
  for (int i = 0; i < 4; ++i) {
    Vec3 target = cloud.points[size_t(i)];
    double r = target.norm();
    rays0.origins.push_back({0, 0, 0});
    rays0.dirs.push_back(target * (1.0 / r));
    rays0.ranges.push_back(r);
  }
  rays1 = rays0;
  rays1.t = micro.dt;

  VoxelizeResult vox = voxelize(cloud, g);
  return fd_run(
      store,
      [&](ParamCtx& ctx) {
        diff::Value grid0 = encode_raw_grid(ctx, micro, vox);
        diff::Value act = embed_action(ctx, micro, action);
        diff::Value grid1 = recurrent_step(ctx, micro, grid0, act, action);
        FrameRender fr0 = render_batch(ctx, micro, grid0, rays0, mix_seed(seed, 21));
        FrameRender fr1 = render_batch(ctx, micro, grid1, rays1, mix_seed(seed, 22));
        diff::Value l0 = *depth_loss(fr0.result, rays0.ranges);
        diff::Value l1 = *depth_loss(fr1.result, rays1.ranges);
        return diff::add(l0, l1);
      },
      micro.fd_step, micro.fault_op);
}

}  // namespace

GradcheckReport run_gradcheck(const RunConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = kTol;
  RunConfig micro = micro_config(cfg);

  struct Inst {
    const char* name;
    std::function<FdResult(uint64_t)> fn;
  };
  std::vector<Inst> instances = {
      {"diffcore.sinusoidal_encode", [&](uint64_t s) { return check_sincos(cfg, s); }},
      {"diffcore.trilinear", [&](uint64_t s) { return check_trilinear(cfg, s); }},
      {"field.sdf", [&](uint64_t s) { return check_field(micro, s); }},
      {"renderer.render", [&](uint64_t s) { return check_render_eqs(cfg, s, false); }},
      {"renderer.loss", [&](uint64_t s) { return check_render_eqs(cfg, s, true); }},
      {"encoder.encode", [&](uint64_t s) { return check_encoder(micro, s); }},
      {"encoder.recurrent_step", [&](uint64_t s) { return check_recurrent(micro, s); }},
      {"pipeline.render_loss", [&](uint64_t s) { return check_pipeline(cfg, s); }},
  };

  report.all_pass = true;
  for (const Inst& inst : instances) {
    GradcheckItem item;
    item.name = inst.name;
    for (int i = 0; i < cfg.fd_seeds && item.finite; ++i) {
      FdResult r = inst.fn(mix_seed(cfg.seed, uint64_t(1000 + i)));
      if (!r.finite) {
        item.finite = false;
        item.worst_param = r.worst_param.empty() ? r.message : r.worst_param;
        break;
      }
      if (r.max_rel_err > item.max_rel_err) {
        item.max_rel_err = r.max_rel_err;
        item.worst_param = r.worst_param;
      }
    }
    item.pass = item.finite && item.max_rel_err <= report.tolerance;
    report.all_pass = report.all_pass && item.pass;
    report.items.push_back(std::move(item));
  }
  auto t1 = std::chrono::steady_clock::now();
  report.seconds = std::chrono::duration<double>(t1 - t0).count();
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::string out;
  char buf[256];
  for (const GradcheckItem& item : report.items) {
    if (!item.finite)
      std::snprintf(buf, sizeof buf, "gradcheck %-28s non-finite (%s) FAIL\n", item.name.c_str(),
                    item.worst_param.c_str());
    else
      std::snprintf(buf, sizeof buf, "gradcheck %-28s max_rel_err=%.3e (worst %s) %s\n",
                    item.name.c_str(), item.max_rel_err, item.worst_param.c_str(),
                    item.pass ? "PASS" : "FAIL");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s in %.1f s (tolerance %.0e)\n",
                report.all_pass ? "PASS" : "FAIL", report.seconds, report.tolerance);
  out += buf;
  return out;
}

}  // namespace trend
