#ifndef DIFFBC_H
#define DIFFBC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DiffbcStatus {
  DIFFBC_STATUS_OK = 0,
  DIFFBC_STATUS_NULL_POINTER = 1,
  DIFFBC_STATUS_CONFIG = 2,
  DIFFBC_STATUS_IO = 3,
  DIFFBC_STATUS_NUMERICAL = 4,
  DIFFBC_STATUS_PANIC = 5,
} DiffbcStatus;

typedef enum DiffbcScheme {
  DIFFBC_SCHEME_BC = 0,
  DIFFBC_SCHEME_EXTRA_STEPS = 1,
  DIFFBC_SCHEME_KDE = 2,
} DiffbcScheme;

/**
 * Opaque handle to a loaded policy.
 */
typedef struct DiffbcPolicy DiffbcPolicy;

/**
 * Sampler settings. `guidance <= 0` disables classifier-free guidance.
 */
typedef struct DiffbcSampler {
  enum DiffbcScheme scheme;
  uint32_t extra_steps;
  uint32_t kde_samples;
  double kde_width;
  double guidance;
} DiffbcSampler;

/**
 * Exact grid-world posteriors. `p_o1_given[0]` (left) is NaN: never taken.
 */
typedef struct DiffbcGridPosteriors {
  double p_obs[4];
  double p_action[3];
  double p_o1_given[3];
} DiffbcGridPosteriors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t diffbc_last_error(char *buf, size_t len);

/**
 * Loads a checkpoint file into a new handle written to `out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a writable pointer.
 */
enum DiffbcStatus diffbc_policy_load(const char *path, struct DiffbcPolicy **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `policy` must come from [`diffbc_policy_load`] and not be used afterwards.
 */
void diffbc_policy_free(struct DiffbcPolicy *policy);

/**
 * Writes the observation and action widths of a policy.
 *
 * # Safety
 * `policy` must be a live handle; `obs_dim` and `action_dim` writable.
 */
enum DiffbcStatus diffbc_policy_dims(const struct DiffbcPolicy *policy,
                                     size_t *obs_dim,
                                     size_t *action_dim);

/**
 * Draws `n` actions for one observation into `out` (`n * action_dim`
 * values, row-major). Baselines ignore `sampler`. Results are a pure
 * function of `seed`.
 *
 * # Safety
 * `obs` must hold `obs_len` values and `out` must hold `out_len` values.
 */
enum DiffbcStatus diffbc_policy_sample(const struct DiffbcPolicy *policy,
                                       const struct DiffbcSampler *sampler,
                                       const double *obs,
                                       size_t obs_len,
                                       size_t n,
                                       uint64_t seed,
                                       double *out,
                                       size_t out_len);

/**
 * Exact grid-world posteriors for `p_right` in (0, 1).
 *
 * # Safety
 * `out` must be writable.
 */
enum DiffbcStatus diffbc_gridworld_posteriors(double p_right, struct DiffbcGridPosteriors *out);

/**
 * Exact earth mover's distance between two uniform point clouds.
 *
 * # Safety
 * `a` holds `n * dim` values, `b` holds `m * dim`, `out` is writable.
 */
enum DiffbcStatus diffbc_emd(const double *a,
                             size_t n,
                             const double *b,
                             size_t m,
                             size_t dim,
                             double *out);

/**
 * Density and coverage of `fake` against `real` with `k` neighbours.
 *
 * # Safety
 * `real` holds `n * dim` values, `fake` holds `m * dim`; outputs writable.
 */
enum DiffbcStatus diffbc_density_coverage(const double *real,
                                          size_t n,
                                          const double *fake,
                                          size_t m,
                                          size_t dim,
                                          size_t k,
                                          double *density,
                                          double *coverage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFBC_H */
