#ifndef BOO_FFI_H
#define BOO_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>
#include <stddef.h>

typedef enum BooStatus {
  BOO_STATUS_OK = 0,
  BOO_STATUS_NULL_POINTER = 1,
  BOO_STATUS_INVALID_ARGUMENT = 2,
  BOO_STATUS_DIMENSION_MISMATCH = 3,
  // Non-finite values, indefinite matrices, solver non-convergence.
  BOO_STATUS_NUMERICAL = 4,
  // Posterior not available yet (still in the warm start).
  BOO_STATUS_NOT_READY = 5,
  // The estimator failed earlier and accepts no more data.
  BOO_STATUS_FAILED = 6,
  BOO_STATUS_PANIC = 7,
} BooStatus;

// Link codes accepted by the `link` arguments.
typedef enum BooLink {
  BOO_LINK_LOGISTIC = 0,
  BOO_LINK_POISSON = 1,
} BooLink;

// Opaque BOO estimator.
typedef struct BooHandle BooHandle;

// Opaque SGD / averaged-SGD estimator.
typedef struct BooSgdHandle BooSgdHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *boo_last_error(void);

// Static description of a status code.
const char *boo_status_name(int status);

// Default warm-start length `⌈M(p ln(p ∨ 3) + x)⌉`; 0 when `p == 0`.
size_t boo_default_t0(size_t p, double x, double m);

// Creates a BOO estimator. `prior_mean` (length `p`) and `prior_precision`
// (`p × p`) may be null for `N(0, I)`.
//
// # Safety
// Non-null pointers must reference arrays of the stated sizes; `out` must be
// writable.
enum BooStatus boo_new(int link,
                       size_t p,
                       size_t t0,
                       const double *prior_mean,
                       const double *prior_precision,
                       struct BooHandle **out);

// # Safety
// `h` must come from [`boo_new`] and not be used afterwards. Null is a no-op.
void boo_free(struct BooHandle *h);

// Consumes one observation `(y, x)` with `x` of length `p`.
//
// # Safety
// `h` must be a live handle and `x` must point to `p` doubles.
enum BooStatus boo_ingest(struct BooHandle *h, double y, const double *x, size_t p);

// Consumes `n` observations; `xs` is row-major `n × p`. Stops at the first
// failure, leaving the earlier observations applied.
//
// # Safety
// `ys` must point to `n` doubles and `xs` to `n·p` doubles.
enum BooStatus boo_ingest_many(struct BooHandle *h,
                               const double *ys,
                               const double *xs,
                               size_t n,
                               size_t p);

// Observations consumed so far; 0 for a null handle.
//
// # Safety
// `h` must be null or a live handle.
size_t boo_count(const struct BooHandle *h);

// 1 once the warm start is over, 0 otherwise.
//
// # Safety
// `h` must be null or a live handle.
int boo_is_online(const struct BooHandle *h);

// Current point estimate (the prior mean during the warm start).
//
// # Safety
// `out` must point to `len` writable doubles.
enum BooStatus boo_estimate(const struct BooHandle *h, double *out, size_t len);

// Diagonal of `Ωₜ⁻¹`. Returns `NotReady` during the warm start.
//
// # Safety
// `out` must point to `len` writable doubles.
enum BooStatus boo_covariance_diag(const struct BooHandle *h, double *out, size_t len);

// Coordinate-wise `1 − alpha` credible intervals from the current posterior.
//
// # Safety
// `lower` and `upper` must each point to `len` writable doubles.
enum BooStatus boo_intervals(const struct BooHandle *h,
                             double alpha,
                             double *lower,
                             double *upper,
                             size_t len);

// Creates a plain SGD estimator started at `initial` (null for zero) with
// step size `step0 · t^(−step_exp)`.
//
// # Safety
// `initial` must be null or point to `p` doubles; `out` must be writable.
enum BooStatus boo_sgd_new(int link,
                           size_t p,
                           const double *initial,
                           double step0,
                           double step_exp,
                           struct BooSgdHandle **out);

// # Safety
// `h` must come from [`boo_sgd_new`] and not be used afterwards. Null is a
// no-op.
void boo_sgd_free(struct BooSgdHandle *h);

// # Safety
// `h` must be a live handle and `x` must point to `p` doubles.
enum BooStatus boo_sgd_step(struct BooSgdHandle *h, double y, const double *x, size_t p);

// Last SGD iterate.
//
// # Safety
// `out` must point to `len` writable doubles.
enum BooStatus boo_sgd_iterate(const struct BooSgdHandle *h, double *out, size_t len);

// Running average of the iterates.
//
// # Safety
// `out` must point to `len` writable doubles.
enum BooStatus boo_sgd_average(const struct BooSgdHandle *h, double *out, size_t len);

// Per-observation negative log-likelihood `b(xᵀθ) − y xᵀθ`.
//
// # Safety
// `x` and `theta` must point to `p` doubles; `out` must be writable.
enum BooStatus boo_glm_loss(int link,
                            double y,
                            const double *x,
                            const double *theta,
                            size_t p,
                            double *out);

// Gradient of [`boo_glm_loss`] in `θ`, written to `out` (length `p`).
//
// # Safety
// `x`, `theta` and `out` must point to `p` doubles.
enum BooStatus boo_glm_gradient(int link,
                                double y,
                                const double *x,
                                const double *theta,
                                size_t p,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOO_FFI_H */
