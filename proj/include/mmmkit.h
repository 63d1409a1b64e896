/* mmmkit C API: marketing-mix modeling with GRU temporal effects, learned
 * channel dependency structure, and Hill saturation.
 *
 * All entry points are thread-compatible: handles must not be shared across
 * threads without external synchronization, and the last-error message is
 * thread-local. Functions return MMM_OK on success; on failure they return a
 * status code and leave a human-readable message in mmm_last_error().
 */
#ifndef MMMKIT_H
#define MMMKIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mmm_status {
  MMM_OK = 0,
  MMM_ERR_INVALID_ARG = 1, /* bad flag/argument/configuration */
  MMM_ERR_IO = 2,          /* file missing or unreadable/unwritable */
  MMM_ERR_PARSE = 3,       /* malformed CSV/JSON content */
  MMM_ERR_DATA = 4,        /* schema or invariant violation in the data */
  MMM_ERR_DIMENSION = 5,   /* mismatched shapes */
  MMM_ERR_TRAINING = 6,    /* non-finite loss or other training failure */
  MMM_ERR_DEGENERATE = 7,  /* target or curve data carries no signal */
  MMM_ERR_INTERNAL = 8
} mmm_status;

/* Opaque handles. */
typedef struct mmm_dataset mmm_dataset;
typedef struct mmm_model mmm_model;

/* Message for the most recent failure on this thread; never NULL. */
const char* mmm_last_error(void);

/* ------------------------------------------------------------------ data */

/* Loads a rectangular multi-region weekly panel from CSV with columns
 * region, week (ISO-8601 date or integer), kpi, channel_<name>...,
 * control_<name>... */
mmm_status mmm_dataset_load_csv(const char* path, mmm_dataset** out);

/* Column selectors for panels whose headers deviate from the defaults.
 * NULL fields keep the default names/prefixes. */
typedef struct mmm_csv_schema {
  const char* region;         /* default "region" */
  const char* week;           /* default "week" */
  const char* kpi;            /* default "kpi" */
  const char* channel_prefix; /* default "channel_" */
  const char* control_prefix; /* default "control_" */
} mmm_csv_schema;

mmm_status mmm_dataset_load_csv_schema(const char* path, const mmm_csv_schema* schema,
                                       mmm_dataset** out);

mmm_status mmm_dataset_write_csv(const mmm_dataset* data, const char* path);
void mmm_dataset_free(mmm_dataset* data);

int mmm_dataset_regions(const mmm_dataset* data);
int mmm_dataset_weeks(const mmm_dataset* data);
int mmm_dataset_channels(const mmm_dataset* data);
int mmm_dataset_controls(const mmm_dataset* data);

/* Synthetic panel with known ground truth. Array pointers may be NULL to use
 * deterministic defaults; when given, decays/hill/coefs have length channels
 * and dag is channels*channels row-major (entry [p*channels + c] feeds
 * channel c from channel p) and must be acyclic. */
typedef struct mmm_synth_spec {
  uint64_t seed;
  int regions;
  int weeks;
  int channels;
  int controls;
  double noise_level;          /* fraction of per-region clean KPI std */
  const double* decays;       /* adstock decay per channel, in [0,1) */
  const double* hill_slopes;  /* Hill exponent per channel, >= 2 */
  const double* hill_halfsat; /* Hill half-saturation per channel, > 0 */
  const double* coefs;        /* KPI effect per channel */
  const double* dag;          /* row-major channels x channels, or NULL */
} mmm_synth_spec;

mmm_status mmm_dataset_synthetic(const mmm_synth_spec* spec, mmm_dataset** out);

/* -------------------------------------------------------------- training */

typedef struct mmm_train_config {
  int epochs;
  double learning_rate;
  double huber_delta;
  double l1_coef;
  double l2_coef;
  double lambda_w;       /* L1 sparsity on the dependency weights */
  double lambda_dag_fit; /* channel self-regression weight */
  double clip_norm;
  int burn_in;
  int holdout_weeks;
  uint64_t seed;
  int dual_update_interval;
  int hidden_size;
  double dag_threshold;
  int learn_low; /* 0/1: learn the lower coefficient bound */
} mmm_train_config;

/* Fills the paper-style defaults (epochs 2000, lr 0.01, holdout 8, ...). */
void mmm_train_config_default(mmm_train_config* config);

/* Deterministic full-batch training; same data + config => same model. */
mmm_status mmm_train(const mmm_dataset* data, const mmm_train_config* config, mmm_model** out);

mmm_status mmm_model_save(const mmm_model* model, const char* path);
mmm_status mmm_model_load(const char* path, mmm_model** out);
void mmm_model_free(mmm_model* model);

/* Metrics document (JSON text) from the training run; free with
 * mmm_string_free. */
mmm_status mmm_model_metrics_json(const mmm_model* model, char** out);

/* Re-evaluates a model against a panel: the most recent holdout_weeks are
 * scored out-of-sample and the result is returned as the same JSON metrics
 * document. Pass holdout_weeks <= 0 to reuse the trained configuration. */
mmm_status mmm_model_evaluate(const mmm_model* model, const mmm_dataset* data, int holdout_weeks,
                              char** out);

/* Writes metrics.json, checkpoint.json, dag_edges.csv, contributions.csv,
 * and curves.csv into out_dir (created if needed). */
mmm_status mmm_model_write_artifacts(const mmm_model* model, const mmm_dataset* data,
                                     const char* out_dir);

/* Fits response curves for every channel and writes curves.csv and
 * curves.html into out_dir. A per-channel text summary ("channel slope
 * saturation status" lines) is returned when summary_out is non-NULL.
 * Fails with MMM_ERR_DEGENERATE only when no channel could be fitted. */
mmm_status mmm_model_fit_curves(const mmm_model* model, const mmm_dataset* data,
                                const char* out_dir, char** summary_out);

/* Fits one response curve to a raw CSV of x,y points (header optional);
 * writes curves.csv/curves.html into out_dir when it is non-NULL. */
mmm_status mmm_fit_curve_csv(const char* points_csv, const char* out_dir, char** summary_out);

/* Renders report.html from the artifacts already present in run_dir. */
mmm_status mmm_write_report(const char* run_dir);

/* Section toggles for the HTML report; nonzero means include. */
typedef struct mmm_report_options {
  int include_dag;
  int include_curves;
} mmm_report_options;

mmm_status mmm_write_report_opts(const char* run_dir, const mmm_report_options* options);

void mmm_string_free(char* text);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MMMKIT_H */
