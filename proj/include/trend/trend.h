/* trend — unsupervised LiDAR forecasting pre-training toolkit.
 *
 * C interface to the shared library: opaque handles, status-code returns.
 * Status values double as process exit codes for the bundled CLI.
 */
#ifndef TREND_TREND_H
#define TREND_TREND_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum trend_status {
  TREND_OK = 0,
  TREND_ERR_CONFIG = 2, /* bad key, bad value, contract violation */
  TREND_ERR_NUMERIC = 3, /* non-finite loss/gradient, failed gradient check */
  TREND_ERR_IO = 4       /* missing or corrupt files */
} trend_status;

typedef struct trend_config trend_config;

const char* trend_version(void);

/* Message for the most recent failing call on this thread. */
const char* trend_last_error(void);

/* ---- configuration ---- */
trend_config* trend_config_create(void);
void trend_config_destroy(trend_config* cfg);

/* Merge a key=value config file into cfg. */
trend_status trend_config_load(trend_config* cfg, const char* path);
trend_status trend_config_set(trend_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL terminated); fails if cap is too small. */
trend_status trend_config_get(const trend_config* cfg, const char* key, char* buf, size_t cap);
trend_status trend_config_save(const trend_config* cfg, const char* path);

/* ---- commands ---- */
trend_status trend_simulate(const trend_config* cfg, const char* out_dir);

/* resume_checkpoint may be NULL. */
trend_status trend_pretrain(const trend_config* cfg, const char* data_dir, const char* out_dir,
                            const char* resume_checkpoint);

trend_status trend_eval_forecast(const trend_config* cfg, const char* checkpoint,
                                 const char* data_dir, int horizon, const char* report_path);

/* Writes the per-check report to report_path (or stdout when NULL);
 * returns TREND_ERR_NUMERIC if any gradient check fails. */
trend_status trend_gradcheck(const trend_config* cfg, const char* report_path);

trend_status trend_render_dump(const trend_config* cfg, const char* checkpoint,
                               const char* data_dir, const char* csv_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TREND_TREND_H */
