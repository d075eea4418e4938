#ifndef RANDWIDTH_H
#define RANDWIDTH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Isotropic coordinate law of a point cloud.
typedef enum RwFamily {
  RW_FAMILY_GAUSSIAN = 0,
  RW_FAMILY_CUBE = 1,
  RW_FAMILY_LAPLACE = 2,
} RwFamily;

// Result of every call.
typedef enum RwStatus {
  RW_STATUS_OK = 0,
  RW_STATUS_NULL_POINTER = 1,
  RW_STATUS_INVALID_ARGUMENT = 2,
  RW_STATUS_DIMENSION_MISMATCH = 3,
  RW_STATUS_REGIME = 4,
  RW_STATUS_NUMERIC = 5,
  RW_STATUS_PANIC = 6,
} RwStatus;

// Point cloud of `len` rows in dimension `dim`.
typedef struct RwCloud RwCloud;

// Orlicz function.
typedef struct RwOrlicz RwOrlicz;

// Seeded random stream.
typedef struct RwRng RwRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// Valid until the next call on the same thread.
const char *rw_last_error(void);

// Library version as a static string.
const char *rw_version(void);

// # Safety
// `out` must be valid for writes.
enum RwStatus rw_rng_new(uint64_t seed, struct RwRng **out);

// Independent child stream `idx`; does not advance `rng`.
//
// # Safety
// `rng` must be a live handle and `out` valid for writes.
enum RwStatus rw_rng_substream(const struct RwRng *rng, uint64_t idx, struct RwRng **out);

// # Safety
// `rng` must be null or a handle from this library not yet freed.
void rw_rng_free(struct RwRng *rng);

// Draws `count` points of the isotropic model, advancing `rng`.
//
// # Safety
// `rng` must be a live handle and `out` valid for writes.
enum RwStatus rw_cloud_sample(enum RwFamily family,
                              size_t dim,
                              size_t count,
                              struct RwRng *rng,
                              struct RwCloud **out);

// Wraps `count` row-major rows of length `dim`.
//
// # Safety
// `rows` must point to `count * dim` readable doubles and `out` be valid for writes.
enum RwStatus rw_cloud_from_rows(enum RwFamily family,
                                 size_t dim,
                                 size_t count,
                                 const double *rows,
                                 struct RwCloud **out);

// # Safety
// `cloud` must be a live handle; `len` and `dim` valid for writes.
enum RwStatus rw_cloud_shape(const struct RwCloud *cloud, size_t *len, size_t *dim);

// # Safety
// `cloud` must be null or a handle from this library not yet freed.
void rw_cloud_free(struct RwCloud *cloud);

// `max_i |y_i <X_i, theta>|`.
//
// # Safety
// Arrays must be readable for their lengths; `out` valid for writes.
enum RwStatus rw_support(const struct RwCloud *cloud,
                         const double *y,
                         size_t y_len,
                         const double *theta,
                         size_t theta_len,
                         double *out);

// Monte Carlo mean width of `K_{N,y}` over `directions` random directions,
// advancing `rng`.
//
// # Safety
// `y` readable for `y_len`; `rng` a live handle; outputs valid for writes.
enum RwStatus rw_mean_width(const struct RwCloud *cloud,
                            const double *y,
                            size_t y_len,
                            size_t directions,
                            struct RwRng *rng,
                            double *value,
                            double *std_error);

// `f(y) = E_X w(K_{N,y})` with `N = y_len`, from `replicates` clouds and
// `directions` directions each. Does not advance `rng`.
//
// # Safety
// `y` readable for `y_len`; `rng` a live handle; outputs valid for writes.
enum RwStatus rw_f_estimate(enum RwFamily family,
                            size_t dim,
                            const double *y,
                            size_t y_len,
                            size_t replicates,
                            size_t directions,
                            const struct RwRng *rng,
                            double *value,
                            double *std_error);

// `M(t) = t^p`, `p >= 1`.
//
// # Safety
// `out` valid for writes.
enum RwStatus rw_orlicz_power(double p, struct RwOrlicz **out);

// Orlicz function of a standard Gaussian marginal.
//
// # Safety
// `out` valid for writes.
enum RwStatus rw_orlicz_gaussian_marginal(struct RwOrlicz **out);

// Plug-in Orlicz function `s -> mean(max(0, s|a_j| - 1))` of a sample.
//
// # Safety
// `samples` readable for `len`; `out` valid for writes.
enum RwStatus rw_orlicz_empirical(const double *samples, size_t len, struct RwOrlicz **out);

// # Safety
// `m` a live handle; `out` valid for writes.
enum RwStatus rw_orlicz_eval(const struct RwOrlicz *m, double s, double *out);

// # Safety
// `m` must be null or a handle from this library not yet freed.
void rw_orlicz_free(struct RwOrlicz *m);

// Luxemburg norm `inf{rho > 0 : sum M(|x_i|/rho) <= 1}`.
//
// # Safety
// `m` a live handle; `x` readable for `len`; `out` valid for writes.
enum RwStatus rw_luxemburg_norm(const struct RwOrlicz *m, const double *x, size_t len, double *out);

// Lower bound for `E w(K_{N,y})`; `k_star` is 0 when no index is admissible.
//
// # Safety
// `y` readable for `len`; outputs valid for writes.
enum RwStatus rw_lower_bound(const double *y,
                             size_t len,
                             size_t n,
                             double c1,
                             double c2,
                             bool strict,
                             double *bound,
                             size_t *k_star);

// Least squares of `ln ys` on `ln xs`.
//
// # Safety
// `xs` and `ys` readable for `len`; outputs valid for writes.
enum RwStatus rw_fit_rate(const double *xs,
                          const double *ys,
                          size_t len,
                          double *slope,
                          double *intercept);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANDWIDTH_H */
