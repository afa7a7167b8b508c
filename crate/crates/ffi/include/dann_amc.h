#ifndef DANN_AMC_H
#define DANN_AMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum DannStatus {
  DANN_STATUS_OK = 0,
  DANN_STATUS_NULL_POINTER = 1,
  DANN_STATUS_INVALID_ARGUMENT = 2,
  DANN_STATUS_IO = 3,
  DANN_STATUS_PARSE = 4,
  DANN_STATUS_CONFIG = 5,
  DANN_STATUS_CHECKPOINT = 6,
  DANN_STATUS_RUNTIME = 7,
  DANN_STATUS_BUFFER_TOO_SMALL = 8,
  DANN_STATUS_PANIC = 9,
} DannStatus;

// A loaded classifier, optionally with the standardization it was trained
// behind.
typedef struct DannModel DannModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *dann_last_error(void);

// Library version as a static NUL-terminated string.
const char *dann_version(void);

// Adversarial weight at training progress `p` for ramp steepness `gamma`.
double dann_lambda_at(double p, double gamma);

// DANN minus baseline accuracy, absolute and relative to the baseline.
// `percent` receives NaN when the baseline is 0.
//
// # Safety
// `absolute` and `percent` must be valid for writes.
enum DannStatus dann_improvement(double baseline, double dann, double *absolute, double *percent);

// Width of the feature vector produced by [`dann_extract_features`].
size_t dann_feature_count(void);

// Name of feature `index`, or NULL when out of range. Static lifetime.
const char *dann_feature_name(size_t index);

// Extracts the full feature vector of one frame given as interleaved
// `re, im` pairs (`2 * n_samples` doubles).
//
// # Safety
// `iq` must hold `2 * n_samples` doubles and `out` must be valid for
// `out_len` writes.
enum DannStatus dann_extract_features(const double *iq,
                                      size_t n_samples,
                                      double *out,
                                      size_t out_len);

// Loads a checkpoint. Inputs to [`dann_model_predict`] must already be
// standardized the way the model was trained.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum DannStatus dann_model_load(const char *path, struct DannModel **out);

// Loads the baseline (`which = 0`) or DANN (`which = 1`) model of a
// completed run cell together with its scaler, so raw feature rows can be
// passed to [`dann_model_predict`].
//
// # Safety
// `cell_dir` must be a NUL-terminated string and `out` valid for writes.
enum DannStatus dann_model_load_run(const char *cell_dir, int which, struct DannModel **out);

// Input width expected by the model, or 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t dann_model_input_dim(const struct DannModel *model);

// Predicts class indices (0 = BPSK … 4 = 256-QAM) for `rows` row-major
// feature rows of width `cols`.
//
// # Safety
// `model` must be a live handle, `x` must hold `rows * cols` doubles and
// `labels` must be valid for `rows` writes.
enum DannStatus dann_model_predict(struct DannModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t cols,
                                   size_t *labels);

// Releases a model handle. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void dann_model_free(struct DannModel *model);

// Runs every cell of the experiment described by a TOML file. `out_dir`
// overrides the configured output root when non-NULL. Cell counts are
// written to `completed` and `failed` when those are non-NULL; failed cells
// return [`DannStatus::Runtime`].
//
// # Safety
// String arguments must be NUL-terminated; count pointers must be NULL or
// valid for writes.
enum DannStatus dann_run_experiment(const char *config_path,
                                    const char *out_dir,
                                    int deterministic,
                                    size_t *completed,
                                    size_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DANN_AMC_H */
