#ifndef XEVENT_H
#define XEVENT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XeStatus {
  XE_STATUS_OK = 0,
  XE_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration, parameters or arguments.
   */
  XE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Divergence, assimilation breakdown or optimizer failure.
   */
  XE_STATUS_NUMERICAL = 3,
  /**
   * A required upstream artifact is missing.
   */
  XE_STATUS_DEPENDENCY = 4,
  /**
   * File system or parse failure.
   */
  XE_STATUS_IO = 5,
  /**
   * The library panicked; the handle arguments are left untouched.
   */
  XE_STATUS_PANIC = 6,
} XeStatus;

/**
 * Opaque belief-path handle (filter or smoother).
 */
typedef struct XeBeliefPath XeBeliefPath;

/**
 * Opaque model handle.
 */
typedef struct XeModel XeModel;

/**
 * Opaque trajectory handle.
 */
typedef struct XeTrajectory XeTrajectory;

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 */
size_t xe_last_error(char *buf, size_t cap);

/**
 * Builds one of the named examples (`intermittent`, `damping_forcing`,
 * `topographic`, `linear`). `params_json` is a JSON object of overrides
 * and may be NULL.
 */
enum XeStatus xe_model_new(const char *example, const char *params_json, struct XeModel **out);

void xe_model_free(struct XeModel *model);

/**
 * Observed and hidden dimensions.
 */
enum XeStatus xe_model_dims(const struct XeModel *model, size_t *dim_obs, size_t *dim_hidden);

/**
 * Integrates `n_steps` Euler–Maruyama steps from `(x0, y0)`.
 */
enum XeStatus xe_simulate(const struct XeModel *model,
                          const double *x0,
                          size_t x0_len,
                          const double *y0,
                          size_t y0_len,
                          double dt,
                          size_t n_steps,
                          uint64_t seed,
                          struct XeTrajectory **out);

void xe_trajectory_free(struct XeTrajectory *traj);

/**
 * Number of grid points.
 */
size_t xe_trajectory_len(const struct XeTrajectory *traj);

/**
 * Observed component `j` over the grid. With `buf` NULL only `len` is set.
 */
enum XeStatus xe_trajectory_obs(const struct XeTrajectory *traj,
                                size_t j,
                                double *buf,
                                size_t cap,
                                size_t *len);

/**
 * Hidden truth component `j` over the grid.
 */
enum XeStatus xe_trajectory_hidden(const struct XeTrajectory *traj,
                                   size_t j,
                                   double *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * Conditional Gaussian filter along `traj`.
 */
enum XeStatus xe_filter(const struct XeModel *model,
                        const struct XeTrajectory *traj,
                        struct XeBeliefPath **out);

/**
 * Fixed-interval smoother from a filter computed on the same trajectory.
 */
enum XeStatus xe_smooth(const struct XeModel *model,
                        const struct XeTrajectory *traj,
                        const struct XeBeliefPath *filter,
                        struct XeBeliefPath **out);

void xe_belief_path_free(struct XeBeliefPath *path);

size_t xe_belief_path_len(const struct XeBeliefPath *path);

size_t xe_belief_path_dim(const struct XeBeliefPath *path);

/**
 * Mean at grid point `n` (length = dim).
 */
enum XeStatus xe_belief_mean(const struct XeBeliefPath *path,
                             size_t n,
                             double *buf,
                             size_t cap,
                             size_t *len);

/**
 * Covariance at grid point `n`, row-major (length = dim²).
 */
enum XeStatus xe_belief_cov(const struct XeBeliefPath *path,
                            size_t n,
                            double *buf,
                            size_t cap,
                            size_t *len);

/**
 * `KL(smoother ‖ filter)` at every grid point.
 */
enum XeStatus xe_kl_filter_smoother(const struct XeBeliefPath *smoother,
                                    const struct XeBeliefPath *filter,
                                    double *buf,
                                    size_t cap,
                                    size_t *len);

/**
 * Runs the full pipeline for the JSON config at `config_path`, writing into
 * `out_dir` (NULL uses the config's `output.directory`).
 */
enum XeStatus xe_run_pipeline(const char *config_path, const char *out_dir);

#endif  /* XEVENT_H */
