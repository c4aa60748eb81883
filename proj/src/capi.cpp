#include "trend/trend.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>

#include "config.hpp"
#include "gradcheck.hpp"
#include "runner.hpp"

struct trend_config {
  trend::RunConfig rep;
};

namespace {

thread_local std::string g_last_error;

trend_status guard(const std::function<void()>& fn) {
  try {
    fn();
    return TREND_OK;
  } catch (const trend::Error& e) {
    g_last_error = e.what();
    return trend_status(int(e.code));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TREND_ERR_CONFIG;
  }
}

}  // namespace

extern "C" {

const char* trend_version(void) { return "0.1.0"; }

const char* trend_last_error(void) { return g_last_error.c_str(); }

trend_config* trend_config_create(void) { return new trend_config{}; }

void trend_config_destroy(trend_config* cfg) { delete cfg; }

trend_status trend_config_load(trend_config* cfg, const char* path) {
  if (!cfg || !path) return TREND_ERR_CONFIG;
  return guard([&] { cfg->rep = trend::RunConfig::from_file(path); });
}

trend_status trend_config_set(trend_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return TREND_ERR_CONFIG;
  return guard([&] { cfg->rep.set(key, value); });
}

trend_status trend_config_get(const trend_config* cfg, const char* key, char* buf, size_t cap) {
  if (!cfg || !key || !buf) return TREND_ERR_CONFIG;
  return guard([&] {
    std::string v = cfg->rep.get(key);
    if (v.size() + 1 > cap)
      trend::fail_config("config_get: buffer too small for '" + std::string(key) + "'");
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

trend_status trend_config_save(const trend_config* cfg, const char* path) {
  if (!cfg || !path) return TREND_ERR_CONFIG;
  return guard([&] { cfg->rep.save(path); });
}

trend_status trend_simulate(const trend_config* cfg, const char* out_dir) {
  if (!cfg || !out_dir) return TREND_ERR_CONFIG;
  return guard([&] { trend::cmd_simulate(cfg->rep, out_dir); });
}

trend_status trend_pretrain(const trend_config* cfg, const char* data_dir, const char* out_dir,
                            const char* resume_checkpoint) {
  if (!cfg || !data_dir || !out_dir) return TREND_ERR_CONFIG;
  return guard([&] {
    trend::cmd_pretrain(cfg->rep, data_dir, out_dir, resume_checkpoint ? resume_checkpoint : "");
  });
}

trend_status trend_eval_forecast(const trend_config* cfg, const char* checkpoint,
                                 const char* data_dir, int horizon, const char* report_path) {
  if (!cfg || !checkpoint || !data_dir || !report_path) return TREND_ERR_CONFIG;
  return guard([&] {
    trend::EvalSummary s =
        trend::cmd_eval_forecast(cfg->rep, checkpoint, data_dir, horizon, report_path);
    std::fprintf(stdout, "eval-forecast horizon=%d sequences=%d mean_mae=%.6g mean_chamfer=%.6g\n",
                 horizon, s.sequences, s.mean_mae, s.mean_chamfer);
  });
}

trend_status trend_gradcheck(const trend_config* cfg, const char* report_path) {
  if (!cfg) return TREND_ERR_CONFIG;
  trend::GradcheckReport report;
  trend_status st = guard([&] { report = trend::run_gradcheck(cfg->rep); });
  if (st != TREND_OK) return st;
  std::string text = trend::format_gradcheck(report);
  if (report_path) {
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) {
      g_last_error = "cannot open report file: " + std::string(report_path);
      return TREND_ERR_IO;
    }
    f << text;
  } else {
    std::fputs(text.c_str(), stdout);
  }
  if (!report.all_pass) {
    g_last_error = "gradient check failed";
    return TREND_ERR_NUMERIC;
  }
  return TREND_OK;
}

trend_status trend_render_dump(const trend_config* cfg, const char* checkpoint,
                               const char* data_dir, const char* csv_path) {
  if (!cfg || !checkpoint || !data_dir || !csv_path) return TREND_ERR_CONFIG;
  return guard([&] { trend::cmd_render_dump(cfg->rep, checkpoint, data_dir, csv_path); });
}

}  // extern "C"
