#ifndef UAVTERRA_H
#define UAVTERRA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  UT_CURVE_FAMILY_SIGMOID = 0,
  UT_CURVE_FAMILY_TANH = 1,
  UT_CURVE_FAMILY_RE_LU = 2,
} UtCurveFamily;

typedef enum {
  UT_LINK_STATE_LOS = 0,
  UT_LINK_STATE_NLOS = 1,
} UtLinkState;

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  UT_STATUS_OK = 0,
  UT_STATUS_NULL_POINTER = 1,
  UT_STATUS_INVALID_PARAMETER = 2,
  UT_STATUS_DOMAIN = 3,
  UT_STATUS_RESOURCE_CAP = 4,
  UT_STATUS_CONFIG = 5,
  UT_STATUS_FIT_FAILED = 6,
  UT_STATUS_IO = 7,
  UT_STATUS_PANIC = 8,
} UtStatus;

/**
 * Opaque building layout.
 */
typedef struct UtBuildings UtBuildings;

/**
 * Channel parameters in dBm / dB. Mirrors the core defaults via
 * `ut_channel_default`.
 */
typedef struct {
  double zeta;
  double eta_los;
  double eta_nlos;
  double alpha_los;
  double alpha_nlos;
  double m_los;
  double m_nlos;
  double sigma2;
} UtChannel;

typedef struct {
  double x;
  double y;
  double z;
} UtPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *ut_last_error(void);

UtChannel ut_channel_default(void);

/**
 * Mean SNR in dB of a link of length `distance` meters.
 *
 * # Safety
 * `out` must be NULL or valid for one write.
 */
UtStatus ut_mean_snr_db(UtChannel channel, double distance, UtLinkState state, double *out);

/**
 * LoS probability of a fitted curve at elevation `theta_deg` degrees.
 *
 * # Safety
 * `out` must be NULL or valid for one write.
 */
UtStatus ut_los_probability(UtCurveFamily family,
                            double a,
                            double b,
                            double theta_deg,
                            double *out);

/**
 * Draw a Poisson building layout over `[0, side]^2` with log-normal heights.
 *
 * # Safety
 * `out` must be NULL or valid for one write. On success `*out` owns a
 * handle to be released with `ut_buildings_free`.
 */
UtStatus ut_buildings_generate(double side,
                               double density_per_km2,
                               double radius,
                               double height_mu,
                               double height_sigma,
                               uint64_t seed,
                               UtBuildings **out);

/**
 * Build a layout from explicit cylinders. `x`, `y`, `radius`, `height` are
 * arrays of length `n` (may be NULL when `n == 0`).
 *
 * # Safety
 * Each non-NULL array must hold `n` readable values; `out` as above.
 */
UtStatus ut_buildings_from_arrays(double side,
                                  const double *x,
                                  const double *y,
                                  const double *radius,
                                  const double *height,
                                  size_t n,
                                  UtBuildings **out);

/**
 * # Safety
 * `h` must be NULL or a handle from this library not yet freed.
 */
void ut_buildings_free(UtBuildings *h);

/**
 * Number of buildings; 0 for NULL.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
size_t ut_buildings_len(const UtBuildings *h);

/**
 * Copy building `i` into the out-pointers.
 *
 * # Safety
 * `h` must be a live handle and every out-pointer valid for one write.
 */
UtStatus ut_buildings_get(const UtBuildings *h,
                          size_t i,
                          double *x,
                          double *y,
                          double *radius,
                          double *height);

/**
 * Whether the segment `p`-`q` passes through a building. `*out` is 1 when
 * blocked and 0 otherwise.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for one write.
 */
UtStatus ut_segment_blocked(const UtBuildings *h, UtPoint p, UtPoint q, int32_t *out);

/**
 * Roof height at `(x, y)`, 0 on open ground.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for one write.
 */
UtStatus ut_height_at(const UtBuildings *h, double x, double y, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAVTERRA_H */
