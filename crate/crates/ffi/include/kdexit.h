#ifndef KDEXIT_H
#define KDEXIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Zero is success.
 */
typedef enum KdxStatus {
  KDX_STATUS_OK = 0,
  KDX_STATUS_NULL_POINTER = 1,
  KDX_STATUS_DIMENSION = 2,
  KDX_STATUS_PARAMETER = 3,
  KDX_STATUS_INDEX = 4,
  KDX_STATUS_DEGENERATE = 5,
  KDX_STATUS_CONFIG = 6,
  KDX_STATUS_LIFECYCLE = 7,
  KDX_STATUS_DATA = 8,
  KDX_STATUS_PARSE = 9,
  KDX_STATUS_VALIDATION = 10,
  KDX_STATUS_CONTRACT = 11,
  KDX_STATUS_IO = 12,
  KDX_STATUS_UTF8 = 13,
  KDX_STATUS_PANIC = 14,
} KdxStatus;

/**
 * Opaque model handle.
 */
typedef struct KdxModel KdxModel;

/**
 * Where a routed input left the network.
 */
typedef struct KdxExitResult {
  /**
   * 1-based exit index.
   */
  size_t exit;
  size_t blocks;
  double confidence;
  size_t predicted_class;
} KdxExitResult;

/**
 * Precision, recall and F1 in [0, 1].
 */
typedef struct KdxPrf {
  double precision;
  double recall;
  double f1;
} KdxPrf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *kdx_last_error(void);

/**
 * Loads a model artifact. On success `*out` owns a handle that must be
 * released with [`kdx_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KdxStatus kdx_model_load(const char *path, struct KdxModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from [`kdx_model_load`] and not be freed twice.
 */
void kdx_model_free(struct KdxModel *model);

/**
 * Number of exit heads, including the final one.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KdxStatus kdx_model_num_exits(const struct KdxModel *model, size_t *out);

/**
 * Number of classes K.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KdxStatus kdx_model_num_classes(const struct KdxModel *model, size_t *out);

/**
 * Expected input width.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KdxStatus kdx_model_input_dim(const struct KdxModel *model, size_t *out);

/**
 * Full-depth class probabilities of one input, written to `probs`
 * (`num_classes` values).
 *
 * # Safety
 * `x` must hold `x_len` doubles and `probs` `probs_len` doubles.
 */
enum KdxStatus kdx_forward_full(const struct KdxModel *model,
                                const double *x,
                                size_t x_len,
                                double *probs,
                                size_t probs_len);

/**
 * Routes one input with threshold `tau` (1 disables early exit). The
 * distribution at the taken exit goes to `probs`; `probs` may be null when
 * `probs_len` is 0.
 *
 * # Safety
 * As for [`kdx_forward_full`]; `result` must be valid.
 */
enum KdxStatus kdx_route(const struct KdxModel *model,
                         const double *x,
                         size_t x_len,
                         double tau,
                         double *probs,
                         size_t probs_len,
                         struct KdxExitResult *result);

/**
 * Budgeted summary selection over `n` segments. Writes 1 into
 * `selected[i]` for chosen segments and 0 otherwise; `*count` receives the
 * number chosen.
 *
 * # Safety
 * `scores`, `durations` and `selected` must each hold `n` elements.
 */
enum KdxStatus kdx_select_summary(const double *scores,
                                  const uint32_t *durations,
                                  size_t n,
                                  double budget_fraction,
                                  uint8_t *selected,
                                  size_t *count);

/**
 * Duration-weighted precision, recall and F1 of one selection against one
 * reference. Selections are 0/1 flag arrays of length `n`.
 *
 * # Safety
 * All arrays must hold `n` elements; `out` must be valid.
 */
enum KdxStatus kdx_f1(const uint8_t *selected,
                      const uint8_t *reference,
                      const uint32_t *durations,
                      size_t n,
                      struct KdxPrf *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KDEXIT_H */
