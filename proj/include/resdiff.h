/* C interface to the residual-dynamics learning and control library.
 *
 * Everything behind this header lives in the shared library; the CLI and any
 * external embedding consume only these symbols. Handles are opaque, every
 * fallible call returns rd_status, and the failure message is retrievable per
 * thread via rd_last_error() until the next call on that thread.
 */
#ifndef RESDIFF_H
#define RESDIFF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RD_API __declspec(dllexport)
#else
#define RD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rd_status {
  RD_OK = 0,
  RD_ERR_INVALID_ARGUMENT = 1,
  RD_ERR_CONTRACT = 2, /* precondition a caller violated */
  RD_ERR_NUMERIC = 3,
  RD_ERR_PARSE = 4,
  RD_ERR_IO = 5,
  RD_ERR_INTEGRITY = 6, /* stored artifact fails its own consistency check */
  RD_ERR_DIVERGED = 7,  /* simulation left the sane-state envelope */
  RD_ERR_VERSION = 8,   /* artifact written by an incompatible format */
  RD_ERR_INTERNAL = 9,
} rd_status;

RD_API const char* rd_version(void);
RD_API const char* rd_status_name(rd_status s);

/* Message for the most recent failing call on this thread; empty string after
 * a successful call. The pointer stays valid until the next library call on
 * the same thread. */
RD_API const char* rd_last_error(void);

/* ---- run configuration ------------------------------------------------- */

typedef struct rd_config rd_config;

/* Strict schema: unknown keys, wrong types, and out-of-range values are
 * rejected with the offending key named. */
RD_API rd_status rd_config_load(const char* path, rd_config** out);
RD_API rd_status rd_config_parse(const char* json_text, const char* context,
                                 rd_config** out);
RD_API void rd_config_free(rd_config* cfg);

/* Canonical JSON with every field materialized; owned by the handle. */
RD_API const char* rd_config_resolved(const rd_config* cfg);

/* 16 hex characters plus the terminator; cap must be at least 17. */
RD_API rd_status rd_config_hash(const rd_config* cfg, char* buf, size_t cap);

/* Command-line overrides, applied before a command runs. */
RD_API rd_status rd_config_set_seed(rd_config* cfg, uint64_t seed);
RD_API rd_status rd_config_set_out(rd_config* cfg, const char* dir);

/* ---- residual predictors ------------------------------------------------ */

typedef struct rd_model rd_model;

/* Opens a checkpoint; the kind (conditioned diffusion, unconditioned
 * diffusion, feed-forward regressor) is read from the file. */
RD_API rd_status rd_model_open(const char* checkpoint_path, rd_model** out);
/* The no-model baseline: always predicts a zero residual. */
RD_API rd_status rd_model_zero(rd_model** out);
RD_API void rd_model_free(rd_model* m);

RD_API const char* rd_model_name(const rd_model* m);
/* Observations required before predictions start (0 for the zero model). */
RD_API int64_t rd_model_history(const rd_model* m);

/* One residual prediction from a chronological observation window. chi,
 * chi_dot, and tau_prev are row-major [rows x 8]; rows must equal
 * rd_model_history() (0 accepts any rows >= 0 and ignores the data).
 * Deterministic: the same window and seed produce the same sample. */
RD_API rd_status rd_model_predict(const rd_model* m, const double* chi,
                                  const double* chi_dot,
                                  const double* tau_prev, int64_t rows,
                                  uint64_t seed, double out_h[8]);

/* ---- pipeline commands -------------------------------------------------- */
/* Each command writes its artifacts plus the resolved configuration into the
 * config's output directory and stamps every table with the config hash.
 * Commands return RD_OK only when their own consistency monitors pass. */

/* Seeded pilot runs across the payload grid; writes one CSV per episode and
 * a manifest with per-file content hashes. full != 0 selects the long
 * protocol duration. */
RD_API rd_status rd_run_collect(const rd_config* cfg, int full);

/* model is one of "proposed", "diffusion-nocond", "mlp". Reads the episodes
 * referenced by data_dir's manifest (content-hash verified), trains, writes
 * <model>.ckpt plus the loss curve, and proves the checkpoint reloads to a
 * bit-identical validation loss. */
RD_API rd_status rd_run_train(const rd_config* cfg, const char* data_dir,
                              const char* model);

/* Per-channel prediction RMSE on a deterministic held-out-payload evaluation
 * set; one table row per checkpoint plus the oracle and zero reference rows
 * (both verified against their closed-form values before the table is
 * written). */
RD_API rd_status rd_run_eval_model(const rd_config* cfg,
                                   const char* const* checkpoints,
                                   size_t n_checkpoints);

/* Closed-loop tracking grid (payloads x speeds x trials) for one model.
 * model is "proposed", "diffusion-nocond", "mlp" (checkpoint required), or
 * "asmc" (checkpoint must be NULL). A diverged trial produces a failure
 * report with the trailing ticks and RD_ERR_DIVERGED. */
RD_API rd_status rd_run_eval_tracking(const rd_config* cfg, const char* model,
                                      const char* checkpoint);

/* Two-regime embedding diagnostics: predicted residuals over a labeled
 * evaluation set, top-2 principal components per checkpoint, cluster
 * separation ratios, and prediction-error histograms. */
RD_API rd_status rd_run_diagnose(const rd_config* cfg,
                                 const char* const* checkpoints,
                                 size_t n_checkpoints);

#ifdef __cplusplus
}
#endif

#endif /* RESDIFF_H */
