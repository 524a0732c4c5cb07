#ifndef STORMFLOW_H
#define STORMFLOW_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_NULL_ARGUMENT = 1,
  SF_ERR_UTF8 = 2,
  SF_ERR_INVALID_INPUT = 3,
  SF_ERR_IO = 4,
  SF_ERR_CONFIG = 5,
  SF_ERR_OUT_OF_RANGE = 6,
  SF_ERR_INTERNAL = 7,
  SF_ERR_PANIC = 8,
} sf_status;

/**
 * Opaque handle to a pond (stage curve plus outlet devices).
 */
typedef struct sf_reservoir sf_reservoir;

/**
 * Opaque handle to a loaded scenario.
 */
typedef struct sf_scenario sf_scenario;

/**
 * One strategy's indicators, filled by [`sf_scenario_run`].
 */
typedef struct sf_indicator_row {
  /**
   * Strategy label, NUL-terminated, truncated to fit.
   */
  char strategy[32];
  double peak_inflow_m3s;
  double peak_outflow_m3s;
  double peak_reduction_pct;
  double treated_volume_m3;
  /**
   * Negative when no eligible volume was released.
   */
  double avg_detention_time_s;
  double max_stage_m;
  /**
   * 1 when the pond overtopped at any instant.
   */
  uint8_t overtopped;
} sf_indicator_row;

/**
 * Outlet-device rating parameters (see the library docs for the laws).
 */
typedef struct sf_outlet_devices {
  double k_o;
  double alpha_v;
  double h0_orifice_m;
  double d_h_m;
  double k_s;
  double alpha_s;
  double crest_depth_m;
  double h_max_m;
} sf_outlet_devices;

/**
 * State-space matrices of the pond linearized at an operating point.
 */
typedef struct sf_linearized_plant {
  double a;
  double b_v;
  double b_s;
  double c;
  double d_v;
  double d_s;
  double phi;
  double epsilon;
  double inflow_gain;
} sf_linearized_plant;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * Valid until the next failing call on the same thread.
 */
const char *sf_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sf_version(void);

/**
 * Load and validate a scenario config; on success `*out` owns the handle.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum sf_status sf_scenario_load(const char *path, struct sf_scenario **out);

/**
 * Run the full pipeline. When `rows` is non-null, up to `capacity`
 * indicator rows are written and `*n_written` reports how many strategies
 * were produced (which may exceed `capacity`).
 *
 * # Safety
 * `handle` must come from [`sf_scenario_load`]; `rows`, when non-null, must
 * point to at least `capacity` rows; `n_written`, when non-null, to one
 * `uintptr_t`.
 */
enum sf_status sf_scenario_run(struct sf_scenario *handle,
                               struct sf_indicator_row *rows,
                               uintptr_t capacity,
                               uintptr_t *n_written);

/**
 * Release a scenario handle. Null is allowed.
 *
 * # Safety
 * `handle` must be null or a pointer from [`sf_scenario_load`], not yet
 * freed.
 */
void sf_scenario_free(struct sf_scenario *handle);

/**
 * Build a pond from `n_breakpoints` (depth_m, area_m2) pairs laid out as
 * `depth0, area0, depth1, area1, ...`.
 *
 * # Safety
 * `stage_pairs` must point to `2 * n_breakpoints` doubles; `out` to
 * writable storage for one pointer.
 */
enum sf_status sf_reservoir_new(const double *stage_pairs,
                                uintptr_t n_breakpoints,
                                double porosity,
                                struct sf_outlet_devices devices,
                                struct sf_reservoir **out);

/**
 * Controlled outflow (m^3/s) at depth `h_m` and openness `(u_v, u_s)`.
 *
 * # Safety
 * `handle` must come from [`sf_reservoir_new`]; `out` must be writable.
 */
enum sf_status sf_reservoir_outflow(const struct sf_reservoir *handle,
                                    double h_m,
                                    double u_v,
                                    double u_s,
                                    double *out);

/**
 * Advance the pond one step of `dt_s` seconds under constant inflow.
 * Writes the new depth and the mean total outflow over the step.
 *
 * # Safety
 * `handle` must come from [`sf_reservoir_new`]; output pointers, when
 * non-null, must be writable.
 */
enum sf_status sf_reservoir_step(const struct sf_reservoir *handle,
                                 double h_m,
                                 double u_v,
                                 double u_s,
                                 double q_in_m3s,
                                 double dt_s,
                                 double *out_h_m,
                                 double *out_q_m3s);

/**
 * First-order state-space model of the pond at an operating point.
 *
 * # Safety
 * `handle` must come from [`sf_reservoir_new`]; `out` must be writable.
 */
enum sf_status sf_reservoir_linearize(const struct sf_reservoir *handle,
                                      double h_m,
                                      double u_v,
                                      double u_s,
                                      double dt_s,
                                      struct sf_linearized_plant *out);

/**
 * Release a pond handle. Null is allowed.
 *
 * # Safety
 * `handle` must be null or a pointer from [`sf_reservoir_new`], not yet
 * freed.
 */
void sf_reservoir_free(struct sf_reservoir *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STORMFLOW_H */
