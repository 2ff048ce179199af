/* Public C API for the patch-matching toolkit.
 *
 * All functions return TSNET_OK (0) on success or a TSNET_ERR_* code; the
 * message for the most recent failure on the calling thread is available via
 * tsnet_last_error(). Handles are opaque and must be released with their
 * matching *_destroy function.
 */
#ifndef TSNET_H
#define TSNET_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define TSNET_OK 0
#define TSNET_ERR_DIMENSION 1   /* shape / contract violation */
#define TSNET_ERR_CONFIG 2      /* bad configuration key, value, or file */
#define TSNET_ERR_INTEGRITY 3   /* corrupt cache or checkpoint */
#define TSNET_ERR_INGESTION 4   /* unreadable or malformed input image */
#define TSNET_ERR_RUNTIME 5     /* other failure (e.g. non-finite loss) */
#define TSNET_ERR_INVALID_ARG 6 /* null pointer or bad argument */

#define TSNET_PATCH_SIZE 64

typedef struct tsnet_config tsnet_config;
typedef struct tsnet_model tsnet_model;

typedef struct tsnet_data_counts {
  long long train_images, test_images, val_images;
  long long train_pairs, test_pairs, val_pairs; /* post-augmentation */
} tsnet_data_counts;

typedef struct tsnet_train_result {
  double best_val_err95;
  int best_epoch;
  double final_train_loss;
} tsnet_train_result;

const char* tsnet_version(void);
/* Message for the last error on this thread; empty string if none. */
const char* tsnet_last_error(void);

/* --- experiment configuration (flat key = value text format) --- */
int tsnet_config_create(tsnet_config** out);
int tsnet_config_load(const char* path, tsnet_config** out);
int tsnet_config_set(tsnet_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to buflen). */
int tsnet_config_get(const tsnet_config* cfg, const char* key, char* buf, size_t buflen);
int tsnet_config_save(const tsnet_config* cfg, const char* path);
/* Stable hash of the serialized config, for reproducibility annotations. */
int tsnet_config_hash(const tsnet_config* cfg, unsigned* out);
void tsnet_config_destroy(tsnet_config* cfg);

/* Builds the dataset named by the config (data.dir, or the synthetic
 * generator parameters when data.dir is empty), writes train/test/val.tspm
 * pair caches plus splits.tsv into out_dir, and reports the counts. */
int tsnet_gen_data(const tsnet_config* cfg, const char* out_dir, tsnet_data_counts* counts);

/* Trains the configured variant on the pair caches in cache_dir; writes
 * metrics.csv, best.tsck and last.tsck into out_dir. resume_path may be NULL
 * or a previous last.tsck for bit-exact continuation. result may be NULL. */
int tsnet_train(const tsnet_config* cfg, const char* cache_dir, const char* out_dir,
                const char* resume_path, tsnet_train_result* result);

/* Evaluates a checkpoint on one split ("train" | "test" | "val") of the pair
 * caches in cache_dir; writes <split>_scores.csv and <split>_curve.csv into
 * out_dir and returns the 95% error rate percentage. */
int tsnet_eval(const char* checkpoint_path, const char* cache_dir, const char* split,
               const char* out_dir, double* err_rate_95);

/* --- direct scoring --- */
int tsnet_model_load(const char* checkpoint_path, tsnet_model** out);
/* patch_a/patch_b: row-major 64x64 intensities in [0,1] (raw, un-normalized;
 * the checkpoint's stored normalization is applied internally). Score is the
 * match probability in (0,1). */
int tsnet_model_score(const tsnet_model* model, const float* patch_a, const float* patch_b,
                      float* score);
void tsnet_model_destroy(tsnet_model* model);

#ifdef __cplusplus
}
#endif

#endif /* TSNET_H */
