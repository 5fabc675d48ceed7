#ifndef SKD_H
#define SKD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SkdStatus {
  SKD_STATUS_OK = 0,
  SKD_STATUS_NULL_POINTER = 1,
  SKD_STATUS_INVALID_ARGUMENT = 2,
  SKD_STATUS_DIMENSION = 3,
  SKD_STATUS_IO = 4,
  SKD_STATUS_CONFIG = 5,
  SKD_STATUS_CHECKPOINT = 6,
  SKD_STATUS_NUMERIC = 7,
  SKD_STATUS_DATA = 8,
  SKD_STATUS_PANIC = 9,
  SKD_STATUS_INTERNAL = 10,
} SkdStatus;

// A loaded teacher or student network.
typedef struct SkdModel SkdModel;

// A loaded learning simplifier.
typedef struct SkdSimplifier SkdSimplifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call into this library on the same thread.
const char *skd_last_error(void);

// Library version as a static NUL-terminated string.
const char *skd_version(void);

// Loads a teacher or student checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SkdStatus skd_model_load(const char *path, struct SkdModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from [`skd_model_load`] and not be used afterwards.
void skd_model_free(struct SkdModel *model);

// Input width of the model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t skd_model_inputs(const struct SkdModel *model);

// Number of classes the model predicts, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t skd_model_classes(const struct SkdModel *model);

// Eval-mode logits for `rows × cols` features into `out` (`rows × classes`).
//
// # Safety
// `x` must hold `rows * cols` doubles and `out` at least `out_len`.
enum SkdStatus skd_model_forward(const struct SkdModel *model,
                                 const double *x,
                                 size_t rows,
                                 size_t cols,
                                 double *out,
                                 size_t out_len);

// Loads a simplifier checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SkdStatus skd_simplifier_load(const char *path, struct SkdSimplifier **out);

// Releases a simplifier; null is ignored.
//
// # Safety
// `s` must come from [`skd_simplifier_load`] and not be used afterwards.
void skd_simplifier_free(struct SkdSimplifier *s);

// Number of classes the simplifier works on, or 0 for a null handle.
//
// # Safety
// `s` must be null or a live handle.
size_t skd_simplifier_classes(const struct SkdSimplifier *s);

// Eval-mode simplified teacher logits `soften(g_t) + Δ`, where softening is
// `log_softmax(g_t / t_soften)` when `soften` is true and the identity
// otherwise. The attention simplifier mixes rows, so pass a whole batch.
//
// # Safety
// `g_t` must hold `rows * classes` doubles and `out` at least `out_len`.
enum SkdStatus skd_simplifier_skd_logits(const struct SkdSimplifier *s,
                                         const double *g_t,
                                         size_t rows,
                                         size_t classes,
                                         bool soften,
                                         double t_soften,
                                         double *out,
                                         size_t out_len);

// Eval-mode correction Δ for already-softened logits.
//
// # Safety
// `g_soft` must hold `rows * classes` doubles and `out` at least `out_len`.
enum SkdStatus skd_simplifier_delta(const struct SkdSimplifier *s,
                                    const double *g_soft,
                                    size_t rows,
                                    size_t classes,
                                    double *out,
                                    size_t out_len);

// Row-wise `softmax(x / t)`.
//
// # Safety
// `x` must hold `rows * cols` doubles and `out` at least `out_len`.
enum SkdStatus skd_softmax(const double *x,
                           size_t rows,
                           size_t cols,
                           double t,
                           double *out,
                           size_t out_len);

// Share of rows whose label is among the `k` largest logits.
//
// # Safety
// `logits` must hold `rows * cols` doubles and `labels` `rows` entries.
enum SkdStatus skd_topk_accuracy(const double *logits,
                                 size_t rows,
                                 size_t cols,
                                 const size_t *labels,
                                 size_t k,
                                 double *out);

// Share of rows where two logit matrices have the same argmax.
//
// # Safety
// Both inputs must hold `rows * cols` doubles.
enum SkdStatus skd_average_agreement(const double *a,
                                     const double *b,
                                     size_t rows,
                                     size_t cols,
                                     double *out);

// Runs a full distillation from a JSON config, as `skd distill` does:
// resolves (or trains) the teacher, trains every seed, and writes the run
// record into the output directory. `out_dir` may be null to keep the
// config's. Mean final top-1 and validation agreement are written to the
// output pointers when they are non-null.
//
// # Safety
// String arguments must be NUL-terminated; output pointers null or writable.
enum SkdStatus skd_run_distill(const char *config_path,
                               const char *out_dir,
                               double *top1_mean,
                               double *agreement_mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKD_H */
