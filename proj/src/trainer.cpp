#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace trend {

int curriculum_stage(int epoch, const std::vector<int>& curri_epochs, int k_max) {
  if (epoch < 0) fail_config("curriculum_stage: epoch must be >= 0");
  int stage = 1;
  int boundary = 0;
  for (int e : curri_epochs) {
    boundary += e;
    if (epoch < boundary) break;
    ++stage;
  }
  if (epoch >= boundary) stage = k_max;  // past every configured stage
  return std::min(stage, k_max);
}

int sample_future_timestep(int l, double decay_base, Rng& rng) {
  if (l < 1) fail_config("sample_future_timestep: l must be >= 1");
  if (l == 1) return 1;
  double total = 0;
  for (int m = 1; m <= l; ++m) total += std::pow(decay_base, -double(m));
  double u = rng.uniform() * total;
  double acc = 0;
  for (int m = 1; m <= l; ++m) {
    acc += std::pow(decay_base, -double(m));
    if (u < acc) return m;
  }
  return l;
}

double cosine_lr(int step, int total, double lr0) {
  if (total <= 0) return lr0;
  double frac = std::min(1.0, std::max(0.0, double(step) / double(total)));
  return lr0 * (1.0 + std::cos(3.14159265358979323846 * frac)) / 2.0;
}

void adam_step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads,
               double lr, int t, bool round_f32) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double bc1 = 1.0 - std::pow(beta1, double(t));
  double bc2 = 1.0 - std::pow(beta2, double(t));
  for (const auto& kv : grads) {
    Param& p = store.at(kv.first);
    const std::vector<double>& g = kv.second;
    if (g.size() != p.value.size())
      fail_config("adam: gradient size mismatch for '" + kv.first + "'");
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        fail_numeric("non-finite gradient for parameter '" + kv.first + "'");
      p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g[i];
      p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g[i] * g[i];
      double mh = p.m[i] / bc1;
      double vh = p.v[i] / bc2;
      p.value[i] -= lr * mh / (std::sqrt(vh) + eps);
      if (round_f32) {
        p.value[i] = double(float(p.value[i]));
        p.m[i] = double(float(p.m[i]));
        p.v[i] = double(float(p.v[i]));
      }
    }
  }
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'T', 'R', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void wr(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::ifstream& f, const std::string& path) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T))) fail_io("truncated checkpoint: " + path);
  return v;
}

void wr_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
}

void rd_doubles(std::ifstream& f, std::vector<double>& v, const std::string& path) {
  if (!f.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(double))))
    fail_io("truncated checkpoint: " + path);
}
}  // namespace

void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_io("cannot open for write: " + path);
  f.write(kCkptMagic, 4);
  wr<uint32_t>(f, kCkptVersion);
  wr<uint64_t>(f, meta.step);
  wr<uint64_t>(f, meta.epoch);
  wr<uint64_t>(f, meta.adam_t);
  wr<uint64_t>(f, meta.config_hash);
  wr<uint32_t>(f, uint32_t(store.all().size()));
  for (const auto& kv : store.all()) {
    wr<uint32_t>(f, uint32_t(kv.first.size()));
    f.write(kv.first.data(), std::streamsize(kv.first.size()));
    wr<uint32_t>(f, uint32_t(kv.second.shape.size()));
    for (int d : kv.second.shape) wr<int64_t>(f, int64_t(d));
    wr_doubles(f, kv.second.value);
    wr_doubles(f, kv.second.m);
    wr_doubles(f, kv.second.v);
  }
  if (!f) fail_io("write failed: " + path);
}

CheckpointMeta load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    fail_io("bad checkpoint magic: " + path);
  if (rd<uint32_t>(f, path) != kCkptVersion) fail_io("unsupported checkpoint version: " + path);
  CheckpointMeta meta;
  meta.step = rd<uint64_t>(f, path);
  meta.epoch = rd<uint64_t>(f, path);
  meta.adam_t = rd<uint64_t>(f, path);
  meta.config_hash = rd<uint64_t>(f, path);
  uint32_t n = rd<uint32_t>(f, path);
  store.clear();
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = rd<uint32_t>(f, path);
    std::string name(len, '\0');
    if (!f.read(name.data(), len)) fail_io("truncated checkpoint: " + path);
    uint32_t ndim = rd<uint32_t>(f, path);
    Param p;
    p.shape.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) p.shape[d] = int(rd<int64_t>(f, path));
    size_t count = size_t(diff::numel(p.shape));
    p.value.resize(count);
    p.m.resize(count);
    p.v.resize(count);
    rd_doubles(f, p.value, path);
    rd_doubles(f, p.m, path);
    rd_doubles(f, p.v, path);
    store.insert(name, std::move(p));
  }
  return meta;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg), store_(cfg.seed) { cfg_.validate(); }

StepRecord Trainer::train_step(const Sequence& seq, int step, int epoch, bool update) {
  auto t_begin = std::chrono::steady_clock::now();
  StepRecord rec;
  rec.step = step;
  rec.epoch = epoch;

  bool forecasting = cfg_.forecast && cfg_.recurrent;
  int l = forecasting ? curriculum_stage(epoch, cfg_.curri_epochs, cfg_.k_max) : 0;
  rec.stage = l;
  if (int(seq.frames.size()) < l + 1 || int(seq.actions.size()) < l)
    fail_config("train_step: sequence shorter than the curriculum stage needs");

  uint64_t step_seed = mix_seed(cfg_.seed, uint64_t(step) + 0x517E9);
  int m = 0;
  if (l > 0) {
    Rng m_rng(mix_seed(step_seed, 0));
    m = sample_future_timestep(l, cfg_.decay_base, m_rng);
  }
  rec.m = m;

  // everything is rendered in the frame of t0
  const Pose& anchor = seq.frames[0].capture_pose;
  PointCloud aligned0 = transform_to_frame(seq.frames[0], anchor);
  PointCloud masked0 = mask_augment(aligned0, cfg_.mask_rate, mix_seed(step_seed, 1), cfg_.grid());

  diff::Tape tape(cfg_.f32());
  if (!cfg_.fault_op.empty()) tape.set_fault_op(cfg_.fault_op);
  ParamCtx ctx(tape, store_);

  VoxelizeResult vox = voxelize(masked0, cfg_.grid());
  telemetry_.points_dropped += vox.dropped;
  diff::Value grid0 = encode_raw_grid(ctx, cfg_, vox);

  diff::Value grid_m = grid0;
  if (m > 0) {
    for (int n = 0; n < m; ++n) {
      diff::Value act = embed_action(ctx, cfg_, seq.actions[size_t(n)]);
      grid_m = recurrent_step(ctx, cfg_, grid_m, act, seq.actions[size_t(n)]);
    }
  }

  double z_thd = cfg_.effective_z_thd();
  RayBatch rays0 = select_render_rays(aligned0, z_thd, cfg_.n_render, mix_seed(step_seed, 2));
  std::optional<diff::Value> loss0;
  if (!rays0.empty()) {
    FrameRender fr0 = render_batch(ctx, cfg_, grid0, rays0, mix_seed(step_seed, 3));
    loss0 = depth_loss(fr0.result, rays0.ranges);
  }

  std::optional<diff::Value> loss_m;
  if (m > 0) {
    PointCloud aligned_m = transform_to_frame(seq.frames[size_t(m)], anchor);
    RayBatch rays_m = select_render_rays(aligned_m, z_thd, cfg_.n_render, mix_seed(step_seed, 4));
    if (!rays_m.empty()) {
      FrameRender frm = render_batch(ctx, cfg_, grid_m, rays_m, mix_seed(step_seed, 5));
      loss_m = depth_loss(frm.result, rays_m.ranges);
    }
  }

  if (!loss0 && !loss_m) {
    ++telemetry_.skipped_frames;
    rec.skipped = true;
    rec.lr = cosine_lr(step, total_steps_, cfg_.lr);
    auto t_end = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration<double, std::milli>(t_end - t_begin).count();
    return rec;
  }

  diff::Value total = loss0 ? *loss0 : *loss_m;
  if (loss0 && loss_m) total = diff::add(*loss0, *loss_m);
  rec.loss_t0 = loss0 ? loss0->scalar() : 0.0;
  rec.loss_tm = loss_m ? loss_m->scalar() : 0.0;
  if (!std::isfinite(total.scalar())) fail_numeric("non-finite training loss");

  rec.lr = cosine_lr(step, total_steps_, cfg_.lr);
  if (update) {
    tape.backward(total);
    adam_step(store_, ctx.grads(), rec.lr, ++adam_t_, cfg_.f32());
  }
  auto t_end = std::chrono::steady_clock::now();
  rec.wall_ms = std::chrono::duration<double, std::milli>(t_end - t_begin).count();
  return rec;
}

Trainer::EvalRender Trainer::render_horizon(const Sequence& seq, int m, const RayBatch& rays) {
  if (m < 0 || m >= int(seq.frames.size()))
    fail_config("render_horizon: horizon outside the sequence");
  const Pose& anchor = seq.frames[0].capture_pose;
  PointCloud aligned0 = transform_to_frame(seq.frames[0], anchor);

  diff::Tape tape(cfg_.f32());
  ParamCtx ctx(tape, store_);
  VoxelizeResult vox = voxelize(aligned0, cfg_.grid());
  diff::Value grid = encode_raw_grid(ctx, cfg_, vox);
  for (int n = 0; n < m; ++n) {
    diff::Value act = embed_action(ctx, cfg_, seq.actions[size_t(n)]);
    grid = recurrent_step(ctx, cfg_, grid, act, seq.actions[size_t(n)]);
  }
  FrameRender fr = render_batch(ctx, cfg_, grid, rays, mix_seed(cfg_.seed, 0xE7A1));
  EvalRender out;
  out.pred = fr.result.pred.val();
  out.weight_sum = fr.result.weight_sum.val();
  return out;
}

Trainer::RunOutcome Trainer::run(const Dataset& ds, const std::string& metrics_path,
                                 const std::string& ckpt_dir, const std::string& resume_path,
                                 int stop_after_epoch) {
  if (ds.size() == 0) fail_config("train: empty dataset");
  int spe = cfg_.steps_per_epoch > 0 ? cfg_.steps_per_epoch : int(ds.size());
  int epochs = cfg_.total_epochs();
  total_steps_ = spe * epochs;

  int start_epoch = 0;
  int step = 0;
  if (!resume_path.empty()) {
    CheckpointMeta meta = load_checkpoint(store_, resume_path);
    if (meta.config_hash != cfg_.hash())
      fail_config("resume: checkpoint was written with a different configuration");
    start_epoch = int(meta.epoch) + 1;
    step = int(meta.step);
    adam_t_ = int(meta.adam_t);
  }

  std::filesystem::create_directories(ckpt_dir);
  std::ofstream metrics(metrics_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) fail_io("cannot open metrics file: " + metrics_path);
  if (resume_path.empty()) metrics << "step,epoch,stage,m,loss_t0,loss_tm,lr,wall_ms\n";

  RunOutcome out;
  char buf[256];
  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    Rng perm_rng(mix_seed(cfg_.seed, 0xE90C ^ uint64_t(epoch)));
    std::vector<int> perm = perm_rng.sample_without_replacement(int(ds.size()), int(ds.size()));
    for (int i = 0; i < spe; ++i, ++step) {
      const Sequence& seq = ds.seqs[size_t(perm[size_t(i) % ds.size()])];
      StepRecord rec = train_step(seq, step, epoch);
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g,%.17g,%.17g,%.3f\n", rec.step, rec.epoch,
                    rec.stage, rec.m, rec.loss_t0, rec.loss_tm, rec.lr, rec.wall_ms);
      metrics << buf;
    }
    metrics.flush();
    out.last_epoch = epoch;
    bool stop_here = stop_after_epoch >= 0 && epoch >= stop_after_epoch;
    bool last = epoch + 1 == epochs || stop_here;
    bool periodic = cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0;
    if (last || periodic) {
      CheckpointMeta meta{uint64_t(step), uint64_t(epoch), uint64_t(adam_t_), cfg_.hash()};
      std::snprintf(buf, sizeof buf, "%s/ckpt_epoch_%04d.bin", ckpt_dir.c_str(), epoch);
      save_checkpoint(store_, meta, buf);
      out.final_checkpoint = buf;
    }
    if (stop_here) break;
  }
  out.steps_done = step;
  return out;
}

// ---------------------------------------------------------------------------

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double acc = 0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) {
        Vec3 d = p - q;
        best = std::min(best, d.dot(d));
      }
      acc += std::sqrt(best);
    }
    return acc / double(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

ForecastEval forecast_metrics(const RayBatch& rays, const std::vector<double>& pred,
                              const std::vector<Vec3>& true_points) {
  if (pred.size() != rays.size()) fail_config("forecast_metrics: prediction length mismatch");
  ForecastEval ev;
  ev.n_rays = int(rays.size());
  if (rays.empty()) return ev;
  double acc = 0;
  std::vector<Vec3> pred_points(rays.size());
  for (size_t i = 0; i < rays.size(); ++i) {
    acc += std::fabs(rays.ranges[i] - pred[i]);
    pred_points[i] = rays.origins[i] + rays.dirs[i] * pred[i];
  }
  ev.mae = acc / double(rays.size());
  ev.chamfer = chamfer_distance(pred_points, true_points);
  return ev;
}

ForecastEval evaluate_forecast_frame(Trainer& trainer, const Sequence& seq, int m, uint64_t seed) {
  const RunConfig& cfg = trainer.config();
  if (m < 0 || m >= int(seq.frames.size()))
    fail_config("evaluate_forecast_frame: horizon outside the sequence");
  const Pose& anchor = seq.frames[0].capture_pose;
  PointCloud aligned_m = transform_to_frame(seq.frames[size_t(m)], anchor);
  RayBatch rays = select_render_rays(aligned_m, cfg.effective_z_thd(), cfg.n_render, seed);
  if (rays.empty()) return {};
  Trainer::EvalRender render = trainer.render_horizon(seq, m, rays);
  PointCloud true_filtered = ground_filter(aligned_m, cfg.effective_z_thd());
  return forecast_metrics(rays, render.pred, true_filtered.points);
}

}  // namespace trend
