#include "runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace trend {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string checksum_hex(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a64(bytes));
  return buf;
}

void write_sequence(const RunConfig& cfg, const SceneSpec& scene,
                    const std::vector<EgoAction>& actions, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<PointCloud> clouds = generate_sequence(scene, cfg.frames, cfg.beams(), actions, cfg.dt);

  json manifest;
  manifest["version"] = 1;
  manifest["frames"] = json::array();
  auto add_file = [&](const std::string& name) {
    manifest["checksums"][name] = checksum_hex(read_file(dir + "/" + name));
  };

  save_scene(scene, dir + "/scene.txt");
  add_file("scene.txt");

  {
    std::ofstream f(dir + "/actions.txt", std::ios::trunc);
    if (!f) fail_io("cannot open for write: " + dir + "/actions.txt");
    char buf[160];
    for (const EgoAction& a : actions) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", a.dx, a.dy, a.dtheta);
      f << buf;
    }
  }
  add_file("actions.txt");

  char name[64];
  for (size_t i = 0; i < clouds.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%03zu.pcb", i);
    save_pointcloud(clouds[i], dir + "/" + name);
    manifest["frames"].push_back(name);
    add_file(name);
  }
  manifest["actions"] = "actions.txt";
  manifest["scene"] = "scene.txt";

  std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
  if (!mf) fail_io("cannot open for write: " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

std::vector<EgoAction> read_actions(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open actions file: " + path);
  std::vector<EgoAction> out;
  EgoAction a;
  while (f >> a.dx >> a.dy >> a.dtheta) out.push_back(a);
  return out;
}

Sequence load_sequence(const std::string& dir, double sensor_height_override) {
  if (!verify_manifest(dir)) fail_io("manifest checksum mismatch in " + dir);
  json manifest = json::parse(read_file(dir + "/manifest.json"));
  SceneSpec scene = load_scene(dir + "/" + manifest["scene"].get<std::string>());
  double h = sensor_height_override > 0 ? sensor_height_override : scene.sensor_height;
  Sequence seq;
  seq.actions = read_actions(dir + "/" + manifest["actions"].get<std::string>());
  Pose pose{0, 0, 0, h};
  size_t i = 0;
  for (const auto& frame : manifest["frames"]) {
    PointCloud cloud = load_pointcloud(dir + "/" + frame.get<std::string>());
    cloud.capture_pose = pose;
    cloud.frame_pose = pose;
    cloud.sensor_origin = {0, 0, 0};
    seq.frames.push_back(std::move(cloud));
    if (i < seq.actions.size())
      pose = pose.advanced(seq.actions[i].dx, seq.actions[i].dy, seq.actions[i].dtheta);
    ++i;
  }
  if (seq.frames.size() != seq.actions.size() + 1)
    fail_io("dataset sequence in " + dir + " has " + std::to_string(seq.frames.size()) +
            " frames but " + std::to_string(seq.actions.size()) + " actions");
  return seq;
}

}  // namespace

bool verify_manifest(const std::string& dir) {
  json manifest = json::parse(read_file(dir + "/manifest.json"));
  for (const auto& [name, sum] : manifest["checksums"].items()) {
    if (checksum_hex(read_file(dir + "/" + name)) != sum.get<std::string>()) return false;
  }
  return true;
}

void cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  for (int i = 0; i < cfg.scenes; ++i) {
    SceneSpec scene;
    if (!cfg.scene_file.empty()) {
      scene = load_scene(cfg.scene_file);
    } else {
      scene = random_scene(mix_seed(cfg.seed, uint64_t(i)));
      scene.sensor_height = cfg.sensor_height;
    }
    std::vector<EgoAction> actions =
        random_actions(mix_seed(cfg.seed, 0xAC00 + uint64_t(i)), cfg.frames - 1);
    std::string dir = out_dir;
    if (cfg.scenes > 1) {
      char sub[32];
      std::snprintf(sub, sizeof sub, "/seq_%03d", i);
      dir += sub;
    }
    write_sequence(cfg, scene, actions, dir);
  }
}

Dataset load_dataset(const std::string& dir, double sensor_height_override) {
  Dataset ds;
  if (fs::exists(dir + "/manifest.json")) {
    ds.seqs.push_back(load_sequence(dir, sensor_height_override));
    return ds;
  }
  std::vector<std::string> subdirs;
  if (!fs::is_directory(dir)) fail_io("dataset directory not found: " + dir);
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json"))
      subdirs.push_back(e.path().string());
  std::sort(subdirs.begin(), subdirs.end());
  for (const std::string& sub : subdirs)
    ds.seqs.push_back(load_sequence(sub, sensor_height_override));
  if (ds.seqs.empty()) fail_io("no sequences found under " + dir);
  return ds;
}

PretrainOutcome cmd_pretrain(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir, const std::string& resume_path) {
  cfg.validate();
  Dataset ds = load_dataset(data_dir, cfg.sensor_height);
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.txt");
  Trainer trainer(cfg);
  PretrainOutcome out;
  out.metrics_path = out_dir + "/metrics.csv";
  Trainer::RunOutcome run = trainer.run(ds, out.metrics_path, out_dir, resume_path);
  out.final_checkpoint = run.final_checkpoint;
  out.steps_done = run.steps_done;
  return out;
}

EvalSummary cmd_eval_forecast(const RunConfig& cfg, const std::string& checkpoint,
                              const std::string& data_dir, int horizon,
                              const std::string& report_path) {
  cfg.validate();
  if (horizon < 0 || horizon > cfg.k_max) fail_config("eval: horizon must be in [0, k_max]");
  Dataset ds = load_dataset(data_dir, cfg.sensor_height);
  Trainer trainer(cfg);
  CheckpointMeta meta = load_checkpoint(trainer.store(), checkpoint);
  trainer.set_adam_t(int(meta.adam_t));
  if (meta.config_hash != cfg.hash())
    std::cerr << "warning: checkpoint configuration hash differs from the current config\n";
  int trained_stage = curriculum_stage(int(meta.epoch), cfg.curri_epochs, cfg.k_max);
  if (horizon > trained_stage)
    std::cerr << "warning: horizon " << horizon << " exceeds trained stage " << trained_stage
              << "; evaluating anyway\n";

  std::ofstream rep(report_path, std::ios::trunc);
  if (!rep) fail_io("cannot open report file: " + report_path);
  rep << "seq,horizon,n_rays,depth_mae,chamfer\n";
  EvalSummary summary;
  char buf[160];
  for (size_t i = 0; i < ds.seqs.size(); ++i) {
    ForecastEval ev =
        evaluate_forecast_frame(trainer, ds.seqs[i], horizon, mix_seed(cfg.seed, 0xE0A1 + i));
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.17g,%.17g\n", i, horizon, ev.n_rays, ev.mae,
                  ev.chamfer);
    rep << buf;
    summary.mean_mae += ev.mae;
    summary.mean_chamfer += ev.chamfer;
    ++summary.sequences;
  }
  if (summary.sequences > 0) {
    summary.mean_mae /= summary.sequences;
    summary.mean_chamfer /= summary.sequences;
  }
  return summary;
}

void cmd_render_dump(const RunConfig& cfg, const std::string& checkpoint,
                     const std::string& data_dir, const std::string& csv_path) {
  cfg.validate();
  Dataset ds = load_dataset(data_dir, cfg.sensor_height);
  Trainer trainer(cfg);
  load_checkpoint(trainer.store(), checkpoint);
  const Sequence& seq = ds.seqs.front();
  const Pose& anchor = seq.frames[0].capture_pose;
  PointCloud aligned0 = transform_to_frame(seq.frames[0], anchor);
  RayBatch rays = select_render_rays(aligned0, cfg.effective_z_thd(), cfg.n_render,
                                     mix_seed(cfg.seed, 0xD0));
  if (rays.empty()) fail_numeric("render-dump: no rays after ground filtering");
  Trainer::EvalRender render = trainer.render_horizon(seq, 0, rays);
  std::ofstream f(csv_path, std::ios::trunc);
  if (!f) fail_io("cannot open for write: " + csv_path);
  f << "r,r_pred,weight_sum\n";
  char buf[120];
  for (size_t i = 0; i < rays.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", rays.ranges[i], render.pred[i],
                  render.weight_sum[i]);
    f << buf;
  }
}

}  // namespace trend
