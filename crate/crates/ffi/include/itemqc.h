#ifndef ITEMQC_H
#define ITEMQC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ItqStatus {
  ITQ_STATUS_OK = 0,
  ITQ_STATUS_NULL_POINTER = 1,
  ITQ_STATUS_INVALID_UTF8 = 2,
  ITQ_STATUS_INVALID_ARGUMENT = 3,
  ITQ_STATUS_NOT_FOUND = 4,
  ITQ_STATUS_MISSING_PREREQUISITE = 5,
  ITQ_STATUS_INSUFFICIENT_DATA = 6,
  ITQ_STATUS_MALFORMED = 7,
  ITQ_STATUS_IO = 8,
  // A Rust panic was caught at the boundary.
  ITQ_STATUS_PANIC = 9,
} ItqStatus;

// Opaque cleaned dataset.
typedef struct ItqDataset ItqDataset;

// Opaque fitted tree ensemble.
typedef struct ItqModel ItqModel;

// Opaque comment relevance scorer.
typedef struct ItqScorer ItqScorer;

// Opaque item statistics for every item of a dataset.
typedef struct ItqStats ItqStats;

typedef struct ItqItemStats {
  double b;
  double p;
  double r;
  double mean_time;
  double infit;
  double outfit;
  double drift_magnitude;
  uint64_t n;
  bool drift_flag;
  bool pretest;
} ItqItemStats;

typedef struct ItqMetrics {
  double accuracy;
  double fpr;
  double fnr;
  double precision;
  double recall;
  double f1;
  double actual_predictive_rate;
} ItqMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next `itq_` call on the same thread.
const char *itq_last_error(void);

// Static name of a status code.
const char *itq_status_name(enum ItqStatus status);

// Loads `items.csv`, `responses.csv`, `candidates.csv` and
// `comments.jsonl` from `dir`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a writable pointer.
enum ItqStatus itq_dataset_load(const char *dir, struct ItqDataset **out);

// Generates the synthetic fixture with speeders already excluded. Zero
// `operational_items` or `persons` keeps the standard size.
//
// # Safety
// `out` must be a writable pointer.
enum ItqStatus itq_dataset_synth(uintptr_t operational_items,
                                 uintptr_t persons,
                                 uint64_t seed,
                                 struct ItqDataset **out);

// Number of items, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live dataset handle.
uintptr_t itq_dataset_item_count(const struct ItqDataset *dataset);

// Number of comments, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live dataset handle.
uintptr_t itq_dataset_comment_count(const struct ItqDataset *dataset);

// # Safety
// `dataset` must be NULL or a handle not yet freed.
void itq_dataset_free(struct ItqDataset *dataset);

// Computes item statistics with the default configuration.
//
// # Safety
// `dataset` must be a live dataset handle and `out` a writable pointer.
enum ItqStatus itq_stats_compute(const struct ItqDataset *dataset, struct ItqStats **out);

// # Safety
// `stats` must be NULL or a live stats handle.
uintptr_t itq_stats_item_count(const struct ItqStats *stats);

// Copies the statistics of one item into `out`.
//
// # Safety
// `stats` must be a live stats handle, `item_id` a NUL-terminated string
// and `out` writable.
enum ItqStatus itq_stats_item(const struct ItqStats *stats,
                              const char *item_id,
                              struct ItqItemStats *out);

// # Safety
// `stats` must be NULL or a handle not yet freed.
void itq_stats_free(struct ItqStats *stats);

// Trains the reference scorer on the dataset's labeled comments.
//
// # Safety
// `dataset` must be a live dataset handle and `out` a writable pointer.
enum ItqStatus itq_scorer_train(const struct ItqDataset *dataset,
                                uint64_t seed,
                                struct ItqScorer **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum ItqStatus itq_scorer_load(const char *path, struct ItqScorer **out);

// # Safety
// `scorer` must be a live scorer handle and `path` a NUL-terminated string.
enum ItqStatus itq_scorer_save(const struct ItqScorer *scorer, const char *path);

// Relevance probability of one comment text.
//
// # Safety
// `scorer` must be a live scorer handle, `text` a NUL-terminated string and
// `out` writable.
enum ItqStatus itq_scorer_probability(const struct ItqScorer *scorer,
                                      const char *text,
                                      double *out);

// # Safety
// `scorer` must be NULL or a handle not yet freed.
void itq_scorer_free(struct ItqScorer *scorer);

// Loads a `model.json` written by a run.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum ItqStatus itq_model_load(const char *path, struct ItqModel **out);

// Number of feature columns the model expects, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live model handle.
uintptr_t itq_model_feature_count(const struct ItqModel *model);

// Positive-class probabilities for `n_rows` row-major rows of `n_cols`
// values. NaN marks a missing value.
//
// # Safety
// `rows` must point to `n_rows * n_cols` doubles and `out` to `n_rows`
// writable doubles.
enum ItqStatus itq_model_predict(const struct ItqModel *model,
                                 const double *rows,
                                 uintptr_t n_rows,
                                 uintptr_t n_cols,
                                 double *out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void itq_model_free(struct ItqModel *model);

// Metrics of a confusion table. Negative counts are rejected.
//
// # Safety
// `out` must be writable.
enum ItqStatus itq_metrics(int64_t tp, int64_t fp, int64_t fn_, int64_t tn, struct ItqMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ITEMQC_H */
