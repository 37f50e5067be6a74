#ifndef SAFETY_FILTERS_H
#define SAFETY_FILTERS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_DIMENSION_MISMATCH = 3,
  SF_STATUS_CONFIG = 4,
  SF_STATUS_IO = 5,
  SF_STATUS_FORMAT = 6,
  SF_STATUS_NOT_CONVERGED = 7,
  SF_STATUS_DEPLOYMENT_REJECTED = 8,
  SF_STATUS_BUDGET_EXCEEDED = 9,
  SF_STATUS_PANIC = 10,
} SfStatus;

// A safety filter together with the dimensions of its model.
typedef struct SfFilter SfFilter;

// A solved value grid.
typedef struct SfGrid SfGrid;

// A safety margin `g`; the failure set is `g < 0`.
typedef struct SfMargin SfMargin;

// A discrete-time system model.
typedef struct SfModel SfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`) and returns the full message length without the NUL,
// or 0 if the last call succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sf_last_error_message(char *buf, size_t len);

// Double integrator `p' = p + v dt`, `v' = v + (u + d) dt` with `|u| <= u_max`, `|d| <= d_max`.
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum SfStatus sf_model_double_integrator(double u_max,
                                         double d_max,
                                         double dt,
                                         struct SfModel **out);

// # Safety
// `model` must be a valid handle or null.
size_t sf_model_state_dim(const struct SfModel *model);

// # Safety
// `model` must be a valid handle or null.
size_t sf_model_control_dim(const struct SfModel *model);

// # Safety
// `model` must be a valid handle or null.
size_t sf_model_disturbance_dim(const struct SfModel *model);

// One step of the dynamics; `next` receives `state_dim` values.
//
// # Safety
// Pointers must be valid for their stated lengths; `next` for `state_dim` values.
enum SfStatus sf_model_step(const struct SfModel *model,
                            const double *x,
                            size_t nx,
                            const double *u,
                            size_t nu,
                            const double *d,
                            size_t nd,
                            double *next);

// # Safety
// `model` must be a handle from this library, not yet freed, or null.
void sf_model_free(struct SfModel *model);

// Half-space margin `g(x) = normal . x + offset`.
//
// # Safety
// `normal` must point to `n` values; `out` must be valid.
enum SfStatus sf_margin_halfspace(const double *normal,
                                  size_t n,
                                  double offset,
                                  struct SfMargin **out);

// # Safety
// `margin` must be a valid handle; `x` must point to `n` values; `value` must be valid.
enum SfStatus sf_margin_eval(const struct SfMargin *margin,
                             const double *x,
                             size_t n,
                             double *value);

// # Safety
// `margin` must be a handle from this library, not yet freed, or null.
void sf_margin_free(struct SfMargin *margin);

// Solves the discrete safety game on a regular grid over `[lower, upper]`
// with `shape[i]` nodes per axis and `u_counts`/`d_counts` candidates per
// control/disturbance axis. The grid is returned even when iteration stops
// at `max_iters`; `converged` tells which. Returns `SF_STATUS_NOT_CONVERGED`
// in that case with `out` set.
//
// # Safety
// Array pointers must be valid for their lengths; `out` and `converged` must be valid.
enum SfStatus sf_grid_solve(const struct SfModel *model,
                            const struct SfMargin *margin,
                            const double *lower,
                            const double *upper,
                            const size_t *shape,
                            size_t n,
                            const size_t *u_counts,
                            size_t n_u,
                            const size_t *d_counts,
                            size_t n_d,
                            double tolerance,
                            size_t max_iters,
                            struct SfGrid **out,
                            bool *converged);

// Reads a grid written by [`sf_grid_save`] or the `solve` command.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SfStatus sf_grid_load(const char *path_, struct SfGrid **out);

// # Safety
// `grid` must be a valid handle; `path` a NUL-terminated string.
enum SfStatus sf_grid_save(const struct SfGrid *grid, const char *path_);

// Interpolated value at `x`; negative infinity outside the grid.
//
// # Safety
// `grid` must be a valid handle; `x` must point to `n` values; `value` must be valid.
enum SfStatus sf_grid_value(const struct SfGrid *grid, const double *x, size_t n, double *value);

// # Safety
// `grid` must be a handle from this library, not yet freed, or null.
void sf_grid_free(struct SfGrid *grid);

// Least-restrictive filter: passes a candidate while the worst-case grid
// value of its successor is non-negative, otherwise applies the grid's
// optimal safety control. The grid handle may be freed afterwards.
//
// # Safety
// Handles must be valid; count arrays must be valid for their lengths; `out` must be valid.
enum SfStatus sf_filter_least_restrictive(const struct SfModel *model,
                                          const struct SfGrid *grid,
                                          const size_t *u_counts,
                                          size_t n_u,
                                          const size_t *d_counts,
                                          size_t n_d,
                                          struct SfFilter **out);

// Builds the `[filter]` of a TOML run configuration, solving its value
// grid first when the filter needs one.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SfStatus sf_filter_from_config(const char *path_, struct SfFilter **out);

// # Safety
// `filter` must be a valid handle or null.
size_t sf_filter_state_dim(const struct SfFilter *filter);

// # Safety
// `filter` must be a valid handle or null.
size_t sf_filter_control_dim(const struct SfFilter *filter);

// Monitor value of candidate `u` at `x`: non-negative means it would pass.
//
// # Safety
// `filter` must be a valid handle; `x`, `u` valid for `nx`, `nu`; `value` valid.
enum SfStatus sf_filter_monitor(const struct SfFilter *filter,
                                const double *x,
                                size_t nx,
                                const double *u,
                                size_t nu,
                                double *value);

// Filters candidate `u` at `x`. `applied` receives `control_dim` values;
// `overridden` and `monitor_value` may be null.
//
// # Safety
// `filter` must be a valid, exclusively used handle; pointers valid for their lengths.
enum SfStatus sf_filter_apply(struct SfFilter *filter,
                              const double *x,
                              size_t nx,
                              const double *u,
                              size_t nu,
                              double *applied,
                              bool *overridden,
                              double *monitor_value);

// Whether the filter certifies `x` as a start state.
//
// # Safety
// `filter` must be a valid handle; `x` valid for `nx`; `certified` valid.
enum SfStatus sf_filter_certifies(const struct SfFilter *filter,
                                  const double *x,
                                  size_t nx,
                                  bool *certified);

// Forgets episode-local state such as cached plans.
//
// # Safety
// `filter` must be a valid, exclusively used handle.
enum SfStatus sf_filter_reset(struct SfFilter *filter);

// # Safety
// `filter` must be a handle from this library, not yet freed, or null.
void sf_filter_free(struct SfFilter *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAFETY_FILTERS_H */
