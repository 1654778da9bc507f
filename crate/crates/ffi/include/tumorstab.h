#ifndef TUMORSTAB_H
#define TUMORSTAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_CONFIG = 3,
  TS_STATUS_SOLVER = 4,
  TS_STATUS_BUFFER_TOO_SMALL = 5,
  TS_STATUS_PANIC = 6,
} TsStatus;

typedef struct TsExperiment TsExperiment;

typedef struct TsStationary TsStationary;

// Rate parameters of the affine kinetics family.
typedef struct TsKinetics {
  double lambda;
  double b_rate;
  double d_rate;
  double p_rate;
  double q_rate;
  // 0 for `F = lambda c`, 1 for `F = lambda c / (1 + c)`.
  uint32_t consumption;
} TsKinetics;

// Headline numbers of a finished stability run.
typedef struct TsSummary {
  double epsilon;
  double z_star;
  // NaN when the fit failed.
  double mu_fit_x;
  double mu_fit_x0;
  double k_x;
  uintptr_t samples;
  bool pass;
} TsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default kinetics parameters.
struct TsKinetics ts_kinetics_default(void);

// Copy the last error message of this thread into `buf` (NUL terminated,
// truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t ts_last_error(char *buf, uintptr_t len);

// Solve for the stationary tumor on a uniform grid of `grid_size` nodes.
//
// # Safety
// `kinetics` must point to a valid struct and `out` to writable storage.
enum TsStatus ts_stationary_new(const struct TsKinetics *kinetics,
                                uintptr_t grid_size,
                                struct TsStationary **out);

// # Safety
// `handle` must come from [`ts_stationary_new`] and not be used afterwards.
void ts_stationary_free(struct TsStationary *handle);

// Stationary log-radius `z_*`, NaN for a null handle.
//
// # Safety
// `handle` must be null or a live handle.
double ts_stationary_z_star(const struct TsStationary *handle);

// # Safety
// `handle` must be null or a live handle.
uintptr_t ts_stationary_len(const struct TsStationary *handle);

// Copy `r`, `c_*` and `p_*` on the grid nodes into caller buffers of
// length `len`; any of them may be null.
//
// # Safety
// Non-null buffers must be valid for `len` doubles.
enum TsStatus ts_stationary_profiles(const struct TsStationary *handle,
                                     double *r,
                                     double *c,
                                     double *p,
                                     uintptr_t len);

// Parse a run configuration; `toml` may be null for the defaults.
//
// # Safety
// `toml` must be null or a NUL-terminated string; `out` must be writable.
enum TsStatus ts_experiment_new(const char *toml, struct TsExperiment **out);

// # Safety
// `handle` must come from [`ts_experiment_new`] and not be used afterwards.
void ts_experiment_free(struct TsExperiment *handle);

// Replace the perturbation amplitude of the configuration.
//
// # Safety
// `handle` must be a live handle.
enum TsStatus ts_experiment_set_amplitude(struct TsExperiment *handle, double epsilon);

// Run the experiment and fill `summary`. A failed inequality is not an
// error; check `summary.pass`.
//
// # Safety
// `handle` must be a live handle and `summary` writable.
enum TsStatus ts_experiment_run(struct TsExperiment *handle, struct TsSummary *summary);

// Copy the sampled times and `normX` of the last run.
//
// # Safety
// Non-null buffers must be valid for `len` doubles.
enum TsStatus ts_experiment_norms(const struct TsExperiment *handle,
                                  double *times,
                                  double *norm_x,
                                  uintptr_t len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TUMORSTAB_H */
