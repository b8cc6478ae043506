#ifndef DRM_H
#define DRM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DRM_OK 0

#define DRM_ERR_USAGE 1

#define DRM_ERR_DATA 2

#define DRM_ERR_NUMERIC 3

#define DRM_ERR_NULL 4

#define DRM_ERR_PANIC 5

/*
 Basis functions `q(x)`, fixed or data-adaptive.
 */
typedef struct DrmBasis DrmBasis;

/*
 A fitted density ratio model.
 */
typedef struct DrmFit DrmFit;

/*
 Samples from several populations.
 */
typedef struct DrmMultiSample DrmMultiSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after success.
 The pointer stays valid until the next call on the same thread.
 */
const char *drm_last_error_message(void);

/*
 Builds samples from `k` populations stored back to back in `values`;
 population `r` has `sizes[r]` observations.

 # Safety
 `values` must point to `sum(sizes)` doubles and `sizes` to `k` sizes.
 */
int32_t drm_multisample_new(const double *values,
                            const size_t *sizes,
                            size_t k,
                            struct DrmMultiSample **out_ms);

/*
 Reads a CSV file; `layout` is `"long"` or `"wide"`.

 # Safety
 `path` and `layout` must be NUL-terminated strings.
 */
int32_t drm_multisample_load_csv(const char *path,
                                 const char *layout,
                                 struct DrmMultiSample **out_ms);

/*
 # Safety
 `ms` must be a handle from this library, or null.
 */
int32_t drm_multisample_num_populations(const struct DrmMultiSample *ms, size_t *out_k);

/*
 # Safety
 `ms` must be a handle from this library, or null.
 */
void drm_multisample_free(struct DrmMultiSample *ms);

/*
 Fixed basis from a comma-separated term list such as `"x,x2"`, or
 `"rich"`.

 # Safety
 `spec` must be a NUL-terminated string.
 */
int32_t drm_basis_fixed(const char *spec, struct DrmBasis **out_basis);

/*
 Data-adaptive basis with the default pipeline; `d = 0` selects the
 dimension automatically.

 # Safety
 `ms` must be a handle from this library.
 */
int32_t drm_basis_adaptive(const struct DrmMultiSample *ms, size_t d, struct DrmBasis **out_basis);

/*
 Loads an adaptive basis written by `drm_basis_save` or `drm basis --dump`.

 # Safety
 `path` must be a NUL-terminated string.
 */
int32_t drm_basis_load(const char *path, struct DrmBasis **out_basis);

/*
 Writes an adaptive basis as JSON. Fixed bases are rejected.

 # Safety
 `basis` must be a handle from this library; `path` NUL-terminated.
 */
int32_t drm_basis_save(const struct DrmBasis *basis, const char *path);

/*
 # Safety
 `basis` must be a handle from this library.
 */
int32_t drm_basis_dim(const struct DrmBasis *basis, size_t *out_d);

/*
 Evaluates `q(x)` into `values`, which holds `len >= dim` doubles.

 # Safety
 `basis` must be a handle from this library; `values` must hold `len`
 doubles.
 */
int32_t drm_basis_eval(const struct DrmBasis *basis, double x, double *values, size_t len);

/*
 # Safety
 `basis` must be a handle from this library, or null.
 */
void drm_basis_free(struct DrmBasis *basis);

/*
 Fits the model by empirical likelihood.

 # Safety
 `ms` and `basis` must be handles from this library.
 */
int32_t drm_fit(const struct DrmMultiSample *ms,
                const struct DrmBasis *basis,
                struct DrmFit **out_fit);

/*
 # Safety
 `fit` must be a handle from this library.
 */
int32_t drm_fit_loglik(const struct DrmFit *fit, double *out_ll);

/*
 Copies `α_1..α_m` into `alpha` (length `m`) and the rows of `β`
 into `beta` (length `m * d`, row-major).

 # Safety
 `fit` must be a handle from this library; the buffers must hold the
 stated lengths.
 */
int32_t drm_fit_params(const struct DrmFit *fit,
                       double *alpha,
                       size_t alpha_len,
                       double *beta,
                       size_t beta_len);

/*
 `inf { t : Ĝ_r(t) >= tau }`.

 # Safety
 `fit` must be a handle from this library.
 */
int32_t drm_fit_quantile(const struct DrmFit *fit, size_t r, double tau, double *out_q);

/*
 `Ĝ_r(x)`.

 # Safety
 `fit` must be a handle from this library.
 */
int32_t drm_fit_cdf(const struct DrmFit *fit, size_t r, double x, double *out_p);

/*
 Smoothed density of population `r` at `x`.

 # Safety
 `fit` must be a handle from this library.
 */
int32_t drm_fit_density(const struct DrmFit *fit, size_t r, double x, double *out_g);

/*
 # Safety
 `fit` must be a handle from this library, or null.
 */
void drm_fit_free(struct DrmFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRM_H */
