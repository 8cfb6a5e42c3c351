#ifndef BRD_H
#define BRD_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Per-gene relevance measure.
 */
enum BrdMeasure
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  /**
   * Posterior mean rank of the gene's cluster variance.
   */
  BRD_MEASURE_MEAN_RANK = 0,
  /**
   * Posterior modal rank.
   */
  BRD_MEASURE_MODE_RANK = 1,
  /**
   * Probability of not being in the lowest-variance cluster.
   */
  BRD_MEASURE_V = 2,
};
#ifndef __cplusplus
typedef int32_t BrdMeasure;
#endif // __cplusplus

/**
 * Result code of every fallible call.
 */
enum BrdStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  BRD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BRD_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or a buffer too small.
   */
  BRD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The data were rejected (non-finite values, bad labels, degenerate groups).
   */
  BRD_STATUS_INVALID_DATA = 3,
  /**
   * The sampler or summary failed.
   */
  BRD_STATUS_RUNTIME = 4,
  /**
   * A panic was caught inside the library.
   */
  BRD_STATUS_PANIC = 5,
};
#ifndef __cplusplus
typedef int32_t BrdStatus;
#endif // __cplusplus

/**
 * Case/control expression matrix.
 */
typedef struct BrdExpression BrdExpression;

/**
 * Posterior summary of one fit.
 */
typedef struct BrdSummary BrdSummary;

/**
 * Gene-level z-scores.
 */
typedef struct BrdZData BrdZData;

/**
 * Chain length, seed and the main prior settings. Obtain defaults from
 * [`brd_fit_options_default`] and change what you need.
 */
typedef struct BrdFitOptions {
  uint64_t iterations;
  uint64_t burn_in;
  uint64_t thin;
  uint64_t seed;
  /**
   * Location and scale of the log-normal base measure on φ².
   */
  double g0_location;
  double g0_scale;
  /**
   * Location and scale of the log-normal prior on γ.
   */
  double gamma_location;
  double gamma_scale;
  /**
   * Baseline only: prior null probability and slab variance.
   */
  double p0;
  double slab_var;
} BrdFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *brd_version(void);

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *brd_last_error_message(void);

/**
 * Default fit options: 4000 iterations, 1000 burn-in, seed 1.
 */
struct BrdFitOptions brd_fit_options_default(void);

/**
 * Copy `n` z-scores into a new dataset (genes are named g1..gn).
 *
 * # Safety
 * `values` must point to `n` doubles and `out` to writable storage.
 */
BrdStatus brd_zdata_new(const double *values, size_t n, struct BrdZData **out);

/**
 * # Safety
 * `z` must be null or a handle from [`brd_zdata_new`] not yet freed.
 */
void brd_zdata_free(struct BrdZData *z);

/**
 * Copy a row-major `n_genes × n_samples` matrix with per-sample labels
 * (0 control, 1 case) into a new dataset.
 *
 * # Safety
 * `values` must point to `n_genes * n_samples` doubles, `labels` to
 * `n_samples` bytes and `out` to writable storage.
 */
BrdStatus brd_expression_new(const double *values,
                             size_t n_genes,
                             size_t n_samples,
                             const uint8_t *labels,
                             struct BrdExpression **out);

/**
 * # Safety
 * `e` must be null or a handle from [`brd_expression_new`] not yet freed.
 */
void brd_expression_free(struct BrdExpression *e);

/**
 * Fit the relevance model to z-scores. `opts` may be null for defaults.
 *
 * # Safety
 * `z` must be a live handle, `opts` null or valid, `out` writable.
 */
BrdStatus brd_fit_reduced(const struct BrdZData *z,
                          const struct BrdFitOptions *opts,
                          struct BrdSummary **out);

/**
 * Fit the point-mass baseline to z-scores. `opts` may be null for defaults.
 *
 * # Safety
 * `z` must be a live handle, `opts` null or valid, `out` writable.
 */
BrdStatus brd_fit_bdp(const struct BrdZData *z,
                      const struct BrdFitOptions *opts,
                      struct BrdSummary **out);

/**
 * Fit the relevance model to expression data. `opts` may be null for defaults.
 *
 * # Safety
 * `e` must be a live handle, `opts` null or valid, `out` writable.
 */
BrdStatus brd_fit_full(const struct BrdExpression *e,
                       const struct BrdFitOptions *opts,
                       struct BrdSummary **out);

/**
 * Number of genes in a summary, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live summary handle.
 */
size_t brd_summary_n_genes(const struct BrdSummary *s);

/**
 * Modal number of clusters over retained iterations, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live summary handle.
 */
size_t brd_summary_modal_k(const struct BrdSummary *s);

/**
 * Retained iterations behind a summary, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live summary handle.
 */
uint64_t brd_summary_iterations(const struct BrdSummary *s);

/**
 * Copy one measure (a `BrdMeasure` value) for every gene into `out`,
 * which holds `len` doubles.
 *
 * # Safety
 * `s` must be a live summary handle and `out` point to `len` writable doubles.
 */
BrdStatus brd_summary_measure(const struct BrdSummary *s, int32_t measure, double *out, size_t len);

/**
 * # Safety
 * `s` must be null or a summary handle not yet freed.
 */
void brd_summary_free(struct BrdSummary *s);

/**
 * Area under the ROC curve of `scores` against 0/1 `truth`; ties count one half.
 *
 * # Safety
 * `scores` and `truth` must point to `n` values, `out` to a writable double.
 */
BrdStatus brd_auc(const double *scores, const uint8_t *truth, size_t n, double *out);

/**
 * Quantile `p` of a log-normal with the given location and scale.
 *
 * # Safety
 * `out` must point to a writable double.
 */
BrdStatus brd_lognormal_quantile(double location, double scale, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRD_H */
