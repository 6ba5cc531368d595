#ifndef CONDENSIM_H
#define CONDENSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 4 match the CLI exit codes.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_CONFIG = 2,
  CS_STATUS_NUMERICAL = 3,
  CS_STATUS_INVARIANT = 4,
  CS_STATUS_BUFFER_TOO_SMALL = 5,
  CS_STATUS_PANIC = 6,
} CsStatus;

typedef struct CsKernel CsKernel;

typedef struct CsMeanField CsMeanField;

typedef struct CsTagged CsTagged;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *cs_last_error(void);

uint64_t cs_derive_seed(uint64_t master, uint64_t index);

/**
 * `c(k, l) = k`.
 */
enum CsStatus cs_kernel_independent(struct CsKernel **out);

/**
 * `c(k, l) = 1 + b / k` for `k >= 1`.
 */
enum CsStatus cs_kernel_zero_range(double b, struct CsKernel **out);

/**
 * `c(k, l) = k (d + l)`.
 */
enum CsStatus cs_kernel_inclusion(double d, struct CsKernel **out);

/**
 * # Safety
 * `kernel` must come from a `cs_kernel_*` constructor and not be used again.
 */
void cs_kernel_free(struct CsKernel *kernel);

/**
 * # Safety
 * `kernel` must be a live handle and `out` writable.
 */
enum CsStatus cs_kernel_rate(const struct CsKernel *kernel, size_t k, size_t l, double *out);

/**
 * Solves the mean-field equations from Poisson(`rho`) on `[0, t_max]`,
 * storing the solution every `dt`.
 *
 * # Safety
 * `kernel` must be a live handle and `out` writable.
 */
enum CsStatus cs_meanfield_solve(const struct CsKernel *kernel,
                                 double rho,
                                 double t_max,
                                 double dt,
                                 double tol,
                                 struct CsMeanField **out);

/**
 * # Safety
 * `sol` must come from [`cs_meanfield_solve`] and not be used again.
 */
void cs_meanfield_free(struct CsMeanField *sol);

/**
 * Writes `f_k(t)` for `k < cap` into `buf` and the number of classes into
 * `len`. Returns `BufferTooSmall` with `len` set when `cap` is short.
 *
 * # Safety
 * `buf` must hold `cap` doubles; `sol` must be live and `len` writable.
 */
enum CsStatus cs_meanfield_f_at(const struct CsMeanField *sol,
                                double t,
                                double *buf,
                                size_t cap,
                                size_t *len);

/**
 * `sum_k k^n f_k(t)`.
 *
 * # Safety
 * `sol` must be live and `out` writable.
 */
enum CsStatus cs_meanfield_moment(const struct CsMeanField *sol, double t, int32_t n, double *out);

/**
 * Tagged simulator on `sites` sites with `particles` particles, seeded with
 * `seed`. The tagged particle starts on site 1.
 *
 * # Safety
 * `kernel` must be live and `out` writable.
 */
enum CsStatus cs_tagged_new(const struct CsKernel *kernel,
                            uint64_t sites,
                            uint64_t particles,
                            uint64_t seed,
                            struct CsTagged **out);

/**
 * # Safety
 * `sim` must come from [`cs_tagged_new`] and not be used again.
 */
void cs_tagged_free(struct CsTagged *sim);

/**
 * Runs the simulator forward by `dt` and writes the tagged occupation.
 *
 * # Safety
 * `sim` must be live and `w` writable.
 */
enum CsStatus cs_tagged_advance(struct CsTagged *sim, double dt, uint64_t *w);

/**
 * Time reached by [`cs_tagged_advance`]; NaN for a null handle.
 *
 * # Safety
 * `sim` must be live or null.
 */
double cs_tagged_time(const struct CsTagged *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONDENSIM_H */
