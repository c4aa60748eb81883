#pragma once

#include <string>

#include "config.hpp"
#include "trainer.hpp"

namespace trend {

// File-level command implementations behind the C API and the CLI.

// Writes cfg.scenes sequence directories (or a single flat sequence) of
// point-cloud frames, the actions file, the scene spec and a checksum
// manifest under out_dir.
void cmd_simulate(const RunConfig& cfg, const std::string& out_dir);

// Loads a dataset written by cmd_simulate; verifies manifest checksums and
// reconstructs ego poses by integrating the actions file.
Dataset load_dataset(const std::string& dir, double sensor_height_override = -1);

struct PretrainOutcome {
  std::string final_checkpoint;
  std::string metrics_path;
  int steps_done = 0;
};
PretrainOutcome cmd_pretrain(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir, const std::string& resume_path = "");

// Per-sequence forecast report (CSV): seq, horizon, n_rays, depth_mae, chamfer.
struct EvalSummary {
  double mean_mae = 0;
  double mean_chamfer = 0;
  int sequences = 0;
};
EvalSummary cmd_eval_forecast(const RunConfig& cfg, const std::string& checkpoint,
                              const std::string& data_dir, int horizon,
                              const std::string& report_path);

// Per-ray CSV (r, r_pred, weight_sum) for the first sequence's frame 0.
void cmd_render_dump(const RunConfig& cfg, const std::string& checkpoint,
                     const std::string& data_dir, const std::string& csv_path);

// true if every file listed in the manifest matches its checksum
bool verify_manifest(const std::string& dir);

}  // namespace trend
