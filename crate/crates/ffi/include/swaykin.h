#ifndef SWAYKIN_H
#define SWAYKIN_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call; anything but `Ok` sets the thread's last error.
typedef enum SwkStatus {
  SWK_STATUS_OK = 0,
  SWK_STATUS_NULL_POINTER = 1,
  SWK_STATUS_INVALID_ARGUMENT = 2,
  SWK_STATUS_INSUFFICIENT_CORRESPONDENCE = 3,
  SWK_STATUS_BEHIND_CAMERA = 4,
  SWK_STATUS_NUMERICAL = 5,
  SWK_STATUS_NO_ESTIMATE = 6,
  SWK_STATUS_IO = 7,
  SWK_STATUS_PANIC = 8,
} SwkStatus;

// Path-length direction: single axes or planar combinations.
typedef enum SwkDirection {
  SWK_DIRECTION_AP = 0,
  SWK_DIRECTION_ML = 1,
  SWK_DIRECTION_SI = 2,
  SWK_DIRECTION_APML = 3,
  SWK_DIRECTION_APSI = 4,
  SWK_DIRECTION_MLSI = 5,
} SwkDirection;

// Frame-to-frame pose tracker for one target.
typedef struct SwkTracker SwkTracker;

// Pinhole intrinsics in pixels with two radial coefficients.
typedef struct SwkCamera {
  double fx;
  double fy;
  double s;
  double x0;
  double y0;
  double k1;
  double k2;
} SwkCamera;

// Bland-Altman agreement of `b` against `a`.
typedef struct SwkAgreement {
  double bias;
  double loa_low;
  double loa_high;
  double sd;
  double slope;
  double intercept;
  double r2;
  size_t n;
} SwkAgreement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null.
//
// The pointer stays valid until the next failing call on the same thread.
const char *swk_last_error_message(void);

// Projects a target-frame point through pose `theta` (`[θ1, θ2, θ3, θ4, θ5, θ6]`,
// radians and millimetres) into distorted pixel coordinates.
//
// # Safety
// `theta` must point to 6 doubles, `point` to 3 and `out_uv` to 2 writable doubles.
enum SwkStatus swk_project(const struct SwkCamera *camera,
                           const double *theta,
                           const double *point,
                           double *out_uv);

// Creates a tracker for a built-in model name (`"shoulder"`, `"lumbar"`) or a
// target JSON path.
//
// `init_theta` may be null; the first frame is then initialized from its own
// observations.
//
// # Safety
// `model` must be a NUL-terminated string; `init_theta` null or 6 doubles.
enum SwkStatus swk_tracker_new(const struct SwkCamera *camera,
                               const char *model,
                               const double *init_theta,
                               struct SwkTracker **out_tracker);

// Releases a tracker; null is ignored.
//
// # Safety
// `tracker` must come from [`swk_tracker_new`] and not be used afterwards.
void swk_tracker_free(struct SwkTracker *tracker);

// Fits one frame of labeled observations, warm-started from the last fitted pose.
//
// `uv` holds `n` raw pixel pairs and `model_index` the matching model feature
// for each. On failure the tracker keeps its previous pose, so the next frame
// warm-starts from it. `out_rms_px` may be null.
//
// # Safety
// `uv` must hold `2 * n` doubles, `model_index` `n` values and `out_theta` 6
// writable doubles.
enum SwkStatus swk_tracker_push_frame(struct SwkTracker *tracker,
                                      const double *uv,
                                      const size_t *model_index,
                                      size_t n,
                                      double *out_theta,
                                      double *out_rms_px);

// Camera-frame position of the model's tracked body point at the last fitted pose.
//
// # Safety
// `out_xyz` must point to 3 writable doubles.
enum SwkStatus swk_tracker_virtual_point(const struct SwkTracker *tracker, double *out_xyz);

// Total path length (mm) of `n` anatomical samples `[AP, ML, SI]` at `rate_hz`
// over the stance bin `[start_sec, end_sec)`.
//
// # Safety
// `xyz` must hold `3 * n` doubles.
enum SwkStatus swk_total_path_length(const double *xyz,
                                     size_t n,
                                     double rate_hz,
                                     double start_sec,
                                     double end_sec,
                                     enum SwkDirection direction,
                                     double *out_mm);

// Bland-Altman agreement of `n` paired measurements.
//
// # Safety
// `a` and `b` must each hold `n` doubles.
enum SwkStatus swk_bland_altman(const double *a,
                                const double *b,
                                size_t n,
                                struct SwkAgreement *out_report);

// Cohen's d of `b` against `a` with the pooled standard deviation.
//
// # Safety
// `a` must hold `n_a` doubles and `b` `n_b` doubles.
enum SwkStatus swk_cohens_d(const double *a,
                            size_t n_a,
                            const double *b,
                            size_t n_b,
                            double *out_d);

// Savitzky-Golay smoothing of one series sampled at `rate_hz`; `out` may alias `x`.
//
// # Safety
// `x` and `out` must each hold `n` doubles.
enum SwkStatus swk_savitzky_golay(const double *x,
                                  size_t n,
                                  double rate_hz,
                                  double window_sec,
                                  size_t order,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWAYKIN_H */
