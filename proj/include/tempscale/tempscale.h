/*
 * tempscale C API
 *
 * Temperature-scaled softmax classification harness: training, gradient
 * attacks, synthetic corruptions and prototype-geometry analysis behind a
 * flat C interface with opaque handles.
 *
 * Conventions:
 *  - Every function returning tsc_status reports TSC_OK (0) on success; on
 *    failure the status doubles as a process exit code and a message is
 *    available from tsc_last_error() (thread-local, valid until the next
 *    failing call on the same thread).
 *  - JSON arguments are UTF-8 strings; schemas are documented in README.md.
 *    Unknown keys are rejected.
 *  - All randomness is derived from the seeds in the configs; equal inputs
 *    produce byte-identical output files.
 */
#ifndef TEMPSCALE_TEMPSCALE_H
#define TEMPSCALE_TEMPSCALE_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsc_status {
  TSC_OK = 0,
  TSC_ERR_INTERNAL = 1,
  TSC_ERR_CONFIG = 2,     /* invalid config / argument / validation failure */
  TSC_ERR_DIVERGENCE = 3, /* training loss became non-finite */
  TSC_ERR_IO = 4          /* file missing, unreadable, or malformed */
} tsc_status;

typedef struct tsc_model tsc_model;
typedef struct tsc_dataset tsc_dataset;

const char* tsc_version(void);
const char* tsc_last_error(void);

/* ---- datasets ---- */

/* spec_json: {"type":"blobs"|"blob-images"|"idx", ...}. cache_dir (nullable)
 * resolves relative idx paths. The handle holds both train and test splits. */
tsc_status tsc_dataset_create(const char* spec_json, const char* cache_dir, tsc_dataset** out);
void tsc_dataset_free(tsc_dataset* ds);
long tsc_dataset_train_size(const tsc_dataset* ds);
long tsc_dataset_test_size(const tsc_dataset* ds);
int tsc_dataset_classes(const tsc_dataset* ds);

/* ---- models ---- */

tsc_status tsc_model_load(const char* path, tsc_model** out);
tsc_status tsc_model_save(const tsc_model* m, const char* path);
void tsc_model_free(tsc_model* m);
/* Malloc'd JSON string with classes, encoder spec and training metadata;
 * release with tsc_string_free. */
tsc_status tsc_model_info(const tsc_model* m, char** out_json);
void tsc_string_free(char* s);

/* Clean accuracy / error count / mean temperature-1 cross entropy on the
 * test split. Output pointers may be NULL. */
tsc_status tsc_model_evaluate(const tsc_model* m, const tsc_dataset* ds, double* accuracy, long* error_count,
                              double* mean_loss);

/* ---- one-shot commands (what the CLI subcommands call) ---- */

/* Train one model per the experiment config (first temperature entry);
 * writes <out_dir>/model.json and <out_dir>/epochs.csv. */
tsc_status tsc_train_run(const char* config_json, const char* cache_dir, const char* out_dir);

/* Full temperature sweep; writes per-tau subdirectories, summary.csv and
 * manifest.json under out_dir. */
tsc_status tsc_sweep_run(const char* config_json, const char* cache_dir, const char* out_dir);

/* Attack the test split of dataset_json (or the model's embedded dataset
 * when dataset_json is NULL/empty). Writes a per-sample CSV when out_csv is
 * given; robust accuracy lands in *robust_accuracy when non-NULL. */
tsc_status tsc_attack_eval_run(const char* model_path, const char* dataset_json, const char* attack_json,
                               const char* cache_dir, const char* out_csv, double* robust_accuracy);

tsc_status tsc_corrupt_eval_run(const char* model_path, const char* dataset_json, const char* corruption_json,
                                const char* cache_dir, const char* out_csv, double* mean_accuracy);

/* Prototype geometry, negative-prototype variance summaries, logit-shift
 * table and feature export for the test split. */
tsc_status tsc_analyze_run(const char* model_path, const char* dataset_json, const char* options_json,
                           const char* cache_dir, const char* out_dir);

/* Closed-form-vs-autodiff-vs-finite-difference gradient oracle suite.
 * Returns TSC_OK when every check passes; writes a one-line report into
 * *out_report (malloc'd) when non-NULL. */
tsc_status tsc_grad_check_run(unsigned long long seed, int instances, char** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TEMPSCALE_TEMPSCALE_H */
