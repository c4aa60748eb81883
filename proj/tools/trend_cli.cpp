// Command-line front end; talks to the core only through the C API.
#include <trend/trend.h>

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace {

int fail_with(trend_status st) {
  std::fprintf(stderr, "error: %s\n", trend_last_error());
  return int(st);
}

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
  app->add_option("-c,--config", args.config_file, "key=value config file");
  app->add_option("--set", args.sets, "override a config key (key=value, repeatable)");
}

// file first, then --set overrides in order
trend_status apply_config(trend_config* cfg, const ConfigArgs& args) {
  if (!args.config_file.empty()) {
    trend_status st = trend_config_load(cfg, args.config_file.c_str());
    if (st != TREND_OK) return st;
  }
  for (const std::string& kv : args.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return TREND_ERR_CONFIG;
    }
    trend_status st =
        trend_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != TREND_OK) return st;
  }
  return TREND_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trend: LiDAR forecasting pre-training on synthetic scenes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", trend_version());

  ConfigArgs sim_cfg, pre_cfg, eval_cfg, grad_cfg, dump_cfg;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic LiDAR dataset");
  std::string sim_out;
  add_config_options(sim, sim_cfg);
  sim->add_option("-o,--out", sim_out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "run curriculum pre-training");
  std::string pre_data, pre_out, pre_resume;
  add_config_options(pre, pre_cfg);
  pre->add_option("-d,--data", pre_data, "dataset directory")->required();
  pre->add_option("-o,--out", pre_out, "run directory for checkpoints and metrics")->required();
  pre->add_option("--resume", pre_resume, "checkpoint to resume from");

  auto* ev = app.add_subcommand("eval-forecast", "score reconstruction/forecast quality");
  std::string ev_ckpt, ev_data, ev_report;
  int ev_horizon = 1;
  add_config_options(ev, eval_cfg);
  ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
  ev->add_option("-d,--data", ev_data, "dataset directory")->required();
  ev->add_option("-m,--horizon", ev_horizon, "forecast horizon (0 = reconstruction)");
  ev->add_option("-r,--report", ev_report, "report CSV path")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  std::string gc_report;
  add_config_options(gc, grad_cfg);
  gc->add_option("-r,--report", gc_report, "write the report here instead of stdout");

  auto* dump = app.add_subcommand("render-dump", "per-ray CSV of observed vs rendered ranges");
  std::string dp_ckpt, dp_data, dp_csv;
  add_config_options(dump, dump_cfg);
  dump->add_option("--checkpoint", dp_ckpt, "trained checkpoint")->required();
  dump->add_option("-d,--data", dp_data, "dataset directory")->required();
  dump->add_option("-o,--out", dp_csv, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  trend_config* cfg = trend_config_create();
  trend_status st = TREND_OK;

  if (sim->parsed()) {
    st = apply_config(cfg, sim_cfg);
    if (st == TREND_OK) st = trend_simulate(cfg, sim_out.c_str());
  } else if (pre->parsed()) {
    st = apply_config(cfg, pre_cfg);
    if (st == TREND_OK)
      st = trend_pretrain(cfg, pre_data.c_str(), pre_out.c_str(),
                          pre_resume.empty() ? nullptr : pre_resume.c_str());
  } else if (ev->parsed()) {
    st = apply_config(cfg, eval_cfg);
    if (st == TREND_OK)
      st = trend_eval_forecast(cfg, ev_ckpt.c_str(), ev_data.c_str(), ev_horizon,
                               ev_report.c_str());
  } else if (gc->parsed()) {
    st = apply_config(cfg, grad_cfg);
    if (st == TREND_OK)
      st = trend_gradcheck(cfg, gc_report.empty() ? nullptr : gc_report.c_str());
  } else if (dump->parsed()) {
    st = apply_config(cfg, dump_cfg);
    if (st == TREND_OK)
      st = trend_render_dump(cfg, dp_ckpt.c_str(), dp_data.c_str(), dp_csv.c_str());
  }

  trend_config_destroy(cfg);
  if (st != TREND_OK) return fail_with(st);
  return 0;
}
