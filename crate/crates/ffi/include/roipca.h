#ifndef ROIPCA_H
#define ROIPCA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RoipcaAlgorithm {
  /**
   * Only the retained eigenpairs are stored.
   */
  ROIPCA_ALGORITHM_COVARIANCE_FREE = 1,
  /**
   * The scatter matrix is stored as well; needed for second order and `mu = star`.
   */
  ROIPCA_ALGORITHM_COVARIANCE_BACKED = 2,
} RoipcaAlgorithm;

typedef enum RoipcaMu {
  ROIPCA_MU_ZERO = 0,
  ROIPCA_MU_MEAN = 1,
  ROIPCA_MU_STAR = 2,
} RoipcaMu;

typedef enum RoipcaStatus {
  ROIPCA_STATUS_OK = 0,
  ROIPCA_STATUS_NULL_POINTER = 1,
  ROIPCA_STATUS_INVALID_ARGUMENT = 2,
  ROIPCA_STATUS_DIMENSION_MISMATCH = 3,
  ROIPCA_STATUS_INSUFFICIENT_DATA = 4,
  ROIPCA_STATUS_NUMERICAL = 5,
  ROIPCA_STATUS_BUFFER_TOO_SMALL = 6,
  ROIPCA_STATUS_PANIC = 7,
} RoipcaStatus;

/**
 * Opaque model handle.
 */
typedef struct RoipcaModel RoipcaModel;

/**
 * Model settings. Start from [`roipca_options_default`].
 */
typedef struct RoipcaOptions {
  enum RoipcaAlgorithm algorithm;
  /**
   * 1 or 2.
   */
  uint32_t order;
  /**
   * Nonzero selects the O(md) eigenvector formula.
   */
  uint32_t fast;
  enum RoipcaMu mu;
  /**
   * Recenter on the running mean every this many samples; 0 never.
   */
  size_t recenter_every;
  size_t reorthonormalize_every;
} RoipcaOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default settings: covariance-free, first order, truncated formula, mean `mu`.
 */
struct RoipcaOptions roipca_options_default(void);

/**
 * Warm-starts a model with `m` components on the `rows × cols` matrix `x0`.
 * `options` may be null for the defaults. On success `*out` owns the model.
 *
 * # Safety
 * `x0` must point to `rows * cols` doubles and `out` must be writable.
 */
enum RoipcaStatus roipca_model_new(const double *x0,
                                   size_t rows,
                                   size_t cols,
                                   size_t m,
                                   const struct RoipcaOptions *options,
                                   struct RoipcaModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`roipca_model_new`] and not be used afterwards.
 */
void roipca_model_free(struct RoipcaModel *model);

/**
 * Absorbs one sample of length `len` (the model dimension).
 *
 * # Safety
 * `model` must be a live handle and `x` must point to `len` doubles.
 */
enum RoipcaStatus roipca_model_ingest(struct RoipcaModel *model, const double *x, size_t len);

/**
 * Recenters the accumulated data on the running mean.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum RoipcaStatus roipca_model_recenter(struct RoipcaModel *model);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t roipca_model_dim(const struct RoipcaModel *model);

/**
 * Number of components, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t roipca_model_components_count(const struct RoipcaModel *model);

/**
 * Samples absorbed so far, warm start included.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t roipca_model_samples(const struct RoipcaModel *model);

/**
 * Copies the components out: `values` receives the `m` eigenvalues at
 * covariance scale (descending), `vectors` the `m × dim` row-major matrix of
 * unit eigenvectors. Either buffer may be null to skip it.
 *
 * # Safety
 * `model` must be a live handle; non-null buffers must hold the stated lengths.
 */
enum RoipcaStatus roipca_model_components(const struct RoipcaModel *model,
                                          double *values,
                                          size_t values_len,
                                          double *vectors,
                                          size_t vectors_len);

/**
 * Copies the calling thread's last error text, NUL-terminated and truncated
 * to `len` bytes, into `buf`. Returns the full length without the NUL, so a
 * call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t roipca_last_error(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *roipca_status_message(enum RoipcaStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROIPCA_H */
