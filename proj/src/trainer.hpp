#pragma once

#include <map>
#include <optional>
#include <string>

#include "encoder.hpp"
#include "renderer.hpp"

namespace trend {

struct Sequence {
  std::vector<PointCloud> frames;  // capture-frame clouds, frames[0] is t0
  std::vector<EgoAction> actions;  // frames.size() - 1 entries
};

struct Dataset {
  std::vector<Sequence> seqs;
  size_t size() const { return seqs.size(); }
};

struct Telemetry {
  int64_t points_dropped = 0;
  int64_t skipped_frames = 0;
};

// ---- schedule pieces ----

// Forecast horizon for an epoch: stage boundaries at the cumulative
// curriculum epochs, clamped to k_max.
int curriculum_stage(int epoch, const std::vector<int>& curri_epochs, int k_max);

// m in {1..l} drawn with p(m) proportional to decay_base^-m.
int sample_future_timestep(int l, double decay_base, Rng& rng);

// lr0 * (1 + cos(pi * step / total)) / 2
double cosine_lr(int step, int total, double lr0);

// Adam with bias correction; t is the 1-based step count after this update.
void adam_step(ParamStore& store, const std::map<std::string, std::vector<double>>& grads,
               double lr, int t, bool round_f32);

// ---- checkpoints ----

struct CheckpointMeta {
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t adam_t = 0;
  uint64_t config_hash = 0;
};

void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta, const std::string& path);
CheckpointMeta load_checkpoint(ParamStore& store, const std::string& path);

// ---- training ----

struct StepRecord {
  int step = 0;
  int epoch = 0;
  int stage = 0;
  int m = 0;
  double loss_t0 = 0;
  double loss_tm = 0;
  double lr = 0;
  double wall_ms = 0;
  bool skipped = false;

  double loss() const { return loss_t0 + loss_tm; }
};

class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  // One optimization step on a sequence. All randomness derives from
  // (cfg.seed, step), so replays and resumes are bit-exact.
  StepRecord train_step(const Sequence& seq, int step, int epoch, bool update = true);

  // Forward-only render of frame m's rays with the current parameters.
  struct EvalRender {
    std::vector<double> pred;
    std::vector<double> weight_sum;
  };
  EvalRender render_horizon(const Sequence& seq, int m, const RayBatch& rays);

  struct RunOutcome {
    int steps_done = 0;
    int last_epoch = -1;
    std::string final_checkpoint;
  };
  // Full loop: epochs * steps_per_epoch steps over shuffled sequences,
  // metrics CSV, periodic + final checkpoints. resume_path restarts from an
  // epoch-boundary checkpoint; stop_after_epoch (>=0) ends the run early.
  RunOutcome run(const Dataset& ds, const std::string& metrics_path, const std::string& ckpt_dir,
                 const std::string& resume_path = "", int stop_after_epoch = -1);

  ParamStore& store() { return store_; }
  const RunConfig& config() const { return cfg_; }
  Telemetry& telemetry() { return telemetry_; }
  int adam_t() const { return adam_t_; }
  void set_adam_t(int t) { adam_t_ = t; }
  void set_total_steps(int t) { total_steps_ = t; }
  int total_steps() const { return total_steps_; }

 private:
  RunConfig cfg_;
  ParamStore store_;
  Telemetry telemetry_;
  int adam_t_ = 0;
  int total_steps_ = 1;
};

// ---- forecast evaluation ----

// Symmetric Chamfer distance: mean nearest-neighbor distance a->b plus b->a.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct ForecastEval {
  double mae = 0;
  double chamfer = 0;
  int n_rays = 0;
};

// Metrics from per-ray predictions against the true aligned cloud.
ForecastEval forecast_metrics(const RayBatch& rays, const std::vector<double>& pred,
                              const std::vector<Vec3>& true_points);

// Renders horizon m of the sequence and scores it against frame m's
// observations. m = 0 is reconstruction evaluation.
ForecastEval evaluate_forecast_frame(Trainer& trainer, const Sequence& seq, int m, uint64_t seed);

}  // namespace trend
