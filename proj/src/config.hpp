#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grid.hpp"
#include "lidarsim.hpp"

namespace trend {

// Flat run configuration: simulator, model, renderer, trainer and ablation
// switches in one key=value namespace. Unknown keys are rejected.
struct RunConfig {
  // preset applied before any explicit key ("paper" or "desk")
  std::string preset = "paper";

  uint64_t seed = 42;

  // simulation
  std::string scene_file;  // empty -> procedural scene from the seed
  int scenes = 1;
  int frames = 3;
  double dt = 0.5;
  double sensor_height = 1.6;
  int beams_azimuth = 32;
  int beams_elevation = 16;
  double fov_h_deg = 120.0;
  double el_min_deg = -20.0;
  double el_max_deg = 4.0;
  double r_max = 40.0;

  // feature-grid geometry
  int grid_d = 8, grid_h = 32, grid_w = 32;
  double vol_min_x = -4, vol_max_x = 36;
  double vol_min_y = -20, vol_max_y = 20;
  double vol_min_z = -2, vol_max_z = 2;

  // model dimensions
  int feat_dim = 128;
  int d_sin = 32;
  int d_act = 16;
  double sin_base = 10000.0;
  int enc_c1 = 16, enc_c2 = 64;
  int act_hidden = 32;
  int sdf_width = 64;
  int sdf_hidden_layers = 3;

  // renderer
  int n_render = 12288;
  int n_ray = 48;
  double near = 0.3;
  double far = 0.0;  // 0 -> grid diagonal
  double min_weight_sum = 0.05;
  double z_init = 10.0;
  double z_thd = std::numeric_limits<double>::quiet_NaN();  // NaN -> 0.3 - sensor_height

  // trainer
  double lr = 2e-4;
  std::vector<int> curri_epochs = {12, 36};
  int k_max = 2;
  double mask_rate = 0.9;
  double decay_base = 2.0;
  int epochs = 0;           // 0 -> sum of curriculum epochs
  int steps_per_epoch = 0;  // 0 -> dataset size
  int checkpoint_every = 0; // epochs between checkpoints; 0 -> final only

  // ablation and behavior switches
  bool recurrent = true;
  bool temporal_field = true;
  bool forecast = true;
  bool raw_action_concat = false;
  std::string precision = "f64";  // f64 | f32

  // gradient checking
  double fd_step = 1e-3;
  int fd_seeds = 10;
  std::string fault_op;

  // ---- access by key ----
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string serialize() const;
  uint64_t hash() const;

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  void save(const std::string& path) const;

  void validate() const;

  // ---- derived views ----
  GridGeom grid() const;
  BeamPattern beams() const;
  double effective_z_thd() const;
  double effective_far() const;
  int total_epochs() const;
  bool f32() const { return precision == "f32"; }
};

}  // namespace trend
