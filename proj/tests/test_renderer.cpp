#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "renderer.hpp"

using namespace trend;

namespace {

diff::Value sdf_rows(diff::Tape& tape, int m, int n, const std::vector<double>& rows) {
  return diff::leaf(tape, {m, n}, rows);
}

}  // namespace

TEST_CASE("alpha is zero for flat and rising sdf") {
  diff::Tape tape;
  diff::Value z = diff::scalar_const(tape, 1.0);
  diff::Value flat = sdf_rows(tape, 1, 3, {0.4, 0.4, 0.4});
  diff::Value a1 = alpha_from_sdf(flat, z);
  CHECK(a1.val()[0] == 0.0);
  CHECK(a1.val()[1] == 0.0);

  diff::Value rising = sdf_rows(tape, 1, 3, {-0.2, 0.1, 0.7});
  diff::Value a2 = alpha_from_sdf(rising, z);
  CHECK(a2.val()[0] == 0.0);
  CHECK(a2.val()[1] == 0.0);
}

TEST_CASE("alpha matches the scalar sigmoid oracle") {
  diff::Tape tape;
  diff::Value z = diff::scalar_const(tape, 1.0);
  diff::Value s = sdf_rows(tape, 1, 2, {1.0, -1.0});
  diff::Value a = alpha_from_sdf(s, z);
  // (phi(1) - phi(-1)) / phi(1) = 1 - e^-1
  CHECK(a.val()[0] == doctest::Approx(0.63212055882855767).epsilon(1e-12));
  CHECK(a.val()[0] < 1.0);
  CHECK(a.val()[0] >= 0.0);
}

TEST_CASE("transmittance trivial rows") {
  diff::Tape tape;
  diff::Value zeros = sdf_rows(tape, 1, 2, {0.0, 0.0});
  diff::Value t1 = transmittance(zeros);
  CHECK(t1.val()[0] == 1.0);
  CHECK(t1.val()[1] == 1.0);

  diff::Value a = diff::leaf(tape, {1, 2}, {0.5, 0.5});
  diff::Value t2 = transmittance(a);
  CHECK(t2.val()[0] == 1.0);
  CHECK(t2.val()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("render concentrates mass on an opaque interval") {
  diff::Tape tape;
  const int n = 8;
  std::vector<double> dists;
  for (int i = 0; i < n; ++i) dists.push_back(1.0 + i);
  // deep crossing between samples 3 and 4 with a sharp sigmoid
  std::vector<double> s = {5, 4, 3, 1, -5, -6, -7, -8};
  diff::Value z = diff::scalar_const(tape, 10.0);
  RenderResult rr = render_depth(sdf_rows(tape, 1, n, s), z, dists, 0.05);
  CHECK(rr.included[0] == 1);
  CHECK(rr.pred.val()[0] == doctest::Approx(4.0).epsilon(0.02));  // dists[3] = 4
}

TEST_CASE("all-zero alpha flags a no-surface ray") {
  diff::Tape tape;
  const int n = 6;
  std::vector<double> dists;
  for (int i = 0; i < n; ++i) dists.push_back(0.5 + i);
  std::vector<double> s = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7};  // rising: all alpha clamped
  diff::Value z = diff::scalar_const(tape, 5.0);
  RenderResult rr = render_depth(sdf_rows(tape, 1, n, s), z, dists, 0.05);
  CHECK(rr.pred.val()[0] == 0.0);
  CHECK(rr.weight_sum.val()[0] == 0.0);
  CHECK(rr.included[0] == 0);
  CHECK(rr.n_included == 0);
  CHECK(!depth_loss(rr, {3.0}).has_value());  // skip-frame signal
}

TEST_CASE("linear sdf renders the crossing within one sample spacing") {
  const double near = 0.3, far = 24.3;
  const int n_ray = 48;
  const double z = 20.0, r_star = 12.15;
  Rng rng(2718);
  std::vector<double> dists = sample_along_ray(n_ray, near, far, rng);
  std::vector<double> s(dists.size());
  for (size_t i = 0; i < dists.size(); ++i) s[i] = r_star - dists[i];
  diff::Tape tape;
  diff::Value zv = diff::scalar_const(tape, z);
  RenderResult rr = render_depth(sdf_rows(tape, 1, n_ray, s), zv, dists, 0.05);
  double spacing = (far - near) / n_ray;
  CHECK(std::fabs(rr.pred.val()[0] - r_star) <= spacing);

  // dense-midpoint evaluation of the same equations agrees
  double dense = oracle::render_depth_dense([&](double r) { return r_star - r; }, z, near, far, 4096);
  CHECK(std::fabs(dense - r_star) <= spacing);
  CHECK(std::fabs(rr.pred.val()[0] - dense) <= spacing);
}

TEST_CASE("occluded second surface barely perturbs the depth") {
  const double near = 0.3, far = 24.3;
  const int n_ray = 48;
  const double z = 20.0, r_star = 8.0;
  Rng rng(3141);
  std::vector<double> dists = sample_along_ray(n_ray, near, far, rng);
  auto sdf_one = [&](double r) { return r_star - r; };
  // second dip far behind the first, fully occluded
  auto sdf_two = [&](double r) {
    double s = r_star - r;
    if (r > 16.0) s = std::min(s, std::fabs(r - 18.0) - 1.0);
    return s;
  };
  auto render_with = [&](const std::function<double(double)>& f) {
    std::vector<double> s(dists.size());
    for (size_t i = 0; i < dists.size(); ++i) s[i] = f(dists[i]);
    diff::Tape tape;
    diff::Value zv = diff::scalar_const(tape, z);
    RenderResult rr = render_depth(sdf_rows(tape, 1, n_ray, s), zv, dists, 0.05);
    return rr.pred.val()[0];
  };
  CHECK(std::fabs(render_with(sdf_one) - render_with(sdf_two)) < 1e-6);
}

TEST_CASE("weights stay bounded over random draws") {
  Rng rng(555);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + int(rng.uniform_int(14));
    std::vector<double> s(size_t(n), 0.0), dists(size_t(n), 0.0);
    double acc = 0.2;
    for (int i = 0; i < n; ++i) {
      s[size_t(i)] = rng.uniform(-2, 2);
      acc += rng.uniform(0.05, 0.8);
      dists[size_t(i)] = acc;
    }
    double z = rng.uniform(0.2, 60);
    diff::Tape tape;
    diff::Value zv = diff::scalar_const(tape, z);
    diff::Value sn = sdf_rows(tape, 1, n, s);
    diff::Value alpha = alpha_from_sdf(sn, zv);
    diff::Value trans = transmittance(alpha);
    diff::Value w = diff::mul(trans, alpha);
    double wsum = 0;
    double prev_t = 1.0 + 1e-15;
    for (int i = 0; i < n - 1; ++i) {
      double wi = w.val()[size_t(i)];
      CHECK(wi >= 0.0);
      CHECK(wi <= 1.0);
      wsum += wi;
      double ti = trans.val()[size_t(i)];
      CHECK(ti <= prev_t);
      prev_t = ti;
    }
    CHECK(wsum <= 1.0 + 1e-10);
  }
}

TEST_CASE("select_render_rays honors the filter and reconstructs points") {
  PointCloud c;
  Rng rng(808);
  for (int i = 0; i < 200; ++i) {
    c.points.push_back({rng.uniform(2, 30), rng.uniform(-10, 10), rng.uniform(-1.6, 1.5)});
    c.features.push_back(rng.uniform(0, 1));
  }
  c.sensor_origin = {0, 0, 0};
  double z_thd = -1.3;
  RayBatch batch = select_render_rays(c, z_thd, 64, 99);
  CHECK(batch.size() == 64);
  for (size_t i = 0; i < batch.size(); ++i) {
    Vec3 p = batch.origins[i] + batch.dirs[i] * batch.ranges[i];
    CHECK(p.z > z_thd);
    CHECK(std::fabs(batch.dirs[i].norm() - 1.0) < 1e-12);
    // o + r d reproduces a cloud point
    double best = 1e18;
    for (const Vec3& q : c.points) best = std::min(best, (p - q).norm());
    CHECK(best < 1e-9);
  }

  // more rays requested than available: all survivors selected
  RayBatch all = select_render_rays(c, z_thd, 100000, 99);
  CHECK(all.size() == ground_filter(c, z_thd).size());

  // empty filtered cloud -> skip-frame signal
  RayBatch none = select_render_rays(c, 100.0, 64, 99);
  CHECK(none.empty());
}

TEST_CASE("stratified samples stay in their slices and are reproducible") {
  const double near = 0.3, far = 10.3;
  const int n = 16;
  Rng r1(4242), r2(4242);
  std::vector<double> a = sample_along_ray(n, near, far, r1);
  std::vector<double> b = sample_along_ray(n, near, far, r2);
  CHECK(a == b);
  double step = (far - near) / n;
  for (int i = 0; i < n; ++i) {
    CHECK(a[size_t(i)] >= near + i * step);
    CHECK(a[size_t(i)] < near + (i + 1) * step);
    if (i > 0) CHECK(a[size_t(i)] > a[size_t(i) - 1]);
  }
  Rng r3(11);
  std::vector<double> one = sample_along_ray(1, near, far, r3);
  CHECK(one.size() == 1);
  CHECK(one[0] >= near);
  CHECK(one[0] < far);
}

TEST_CASE("depth loss basics and elementwise oracle") {
  diff::Tape tape;
  const int m = 5;
  std::vector<double> pred_rows = {1.0, 2.0, 3.0, 4.0, 5.0};
  RenderResult rr;
  rr.pred = diff::leaf(tape, {m}, pred_rows);
  rr.weight_sum = diff::leaf(tape, {m}, {1, 1, 1, 1, 1});
  rr.included.assign(m, 1);
  rr.n_included = m;

  std::optional<diff::Value> zero = depth_loss(rr, pred_rows);
  REQUIRE(zero.has_value());
  CHECK(zero->scalar() == 0.0);

  std::vector<double> shifted = {1.25, 2.25, 3.25, 4.25, 5.25};
  std::optional<diff::Value> c = depth_loss(rr, shifted);
  CHECK(c->scalar() == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(3);
  std::vector<double> obs(m);
  for (double& v : obs) v = rng.uniform(0, 6);
  std::optional<diff::Value> mixed = depth_loss(rr, obs);
  double expect = 0;
  for (int i = 0; i < m; ++i) expect += std::fabs(pred_rows[size_t(i)] - obs[size_t(i)]);
  expect /= m;
  CHECK(mixed->scalar() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("partial exclusion averages over included rays only") {
  diff::Tape tape;
  RenderResult rr;
  rr.pred = diff::leaf(tape, {3}, {1.0, 9.0, 3.0});
  rr.weight_sum = diff::leaf(tape, {3}, {1.0, 0.01, 1.0});
  rr.included = {1, 0, 1};
  rr.n_included = 2;
  std::optional<diff::Value> loss = depth_loss(rr, {2.0, 100.0, 2.0});
  REQUIRE(loss.has_value());
  CHECK(loss->scalar() == doctest::Approx(1.0).epsilon(1e-12));  // (1 + 1) / 2
}

TEST_CASE("sharpness parameter starts at its configured value") {
  RunConfig cfg;
  cfg.set("preset", "desk");
  cfg.z_init = 10.0;
  ParamStore store(5);
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value z = sharpness(ctx, cfg);
  CHECK(z.val()[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(z.val()[0] > 0);
}
