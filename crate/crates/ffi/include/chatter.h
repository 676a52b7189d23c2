#ifndef CHATTER_H
#define CHATTER_H

#include <stdbool.h>
#include <stddef.h>

typedef enum ChatterDemand {
  CHATTER_DEMAND_CONSTANT = 0,
  CHATTER_DEMAND_SEASONAL = 1,
  CHATTER_DEMAND_PULSE = 2,
} ChatterDemand;

typedef enum ChatterSensitivity {
  CHATTER_SENSITIVITY_RESOLVE = 0,
  CHATTER_SENSITIVITY_FROZEN_MEASURE = 1,
} ChatterSensitivity;

typedef enum ChatterStatus {
  CHATTER_STATUS_OK = 0,
  CHATTER_STATUS_NULL_POINTER = 1,
  CHATTER_STATUS_INVALID_ARGUMENT = 2,
  CHATTER_STATUS_NON_FINITE = 3,
  CHATTER_STATUS_INFEASIBLE = 4,
  CHATTER_STATUS_EMPTY_GRID = 5,
  CHATTER_STATUS_DIMENSION_MISMATCH = 6,
  CHATTER_STATUS_SINGULAR_CORRECTION = 7,
  CHATTER_STATUS_BUFFER_TOO_SMALL = 8,
  CHATTER_STATUS_PANIC = 9,
} ChatterStatus;

// Opaque problem handle.
typedef struct ChatterProblem ChatterProblem;

// Opaque solve result handle.
typedef struct ChatterResult ChatterResult;

// Shooting and grid settings. Start from [`chatter_solve_options_default`].
typedef struct ChatterSolveOptions {
  // 0 uses the problem's own interval count.
  size_t intervals;
  size_t levels_per_dim;
  size_t level_cap;
  double gamma;
  // Relative perturbation: `δp = delta_p · max(1, ‖p0‖)`.
  double delta_p;
  double epsilon;
  size_t max_iterations;
  double ridge;
  size_t max_backtracks;
  enum ChatterSensitivity sensitivity;
} ChatterSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread, or null. Valid until the
// next failing call on this thread.
const char *chatter_last_error_message(void);

// Static, NUL-terminated library version.
const char *chatter_version(void);

struct ChatterSolveOptions chatter_solve_options_default(void);

// Scalar LQR benchmark on [0, 1]; default partition of 100 intervals.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum ChatterStatus chatter_problem_lqr(struct ChatterProblem **out);

// Supply-chain problem with synthetic demand, built for `intervals` intervals.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum ChatterStatus chatter_problem_supply_chain(enum ChatterDemand demand,
                                                double amplitude,
                                                double period,
                                                double horizon,
                                                size_t intervals,
                                                struct ChatterProblem **out);

// # Safety
// `problem` must be null or a handle from this library, not yet freed.
void chatter_problem_free(struct ChatterProblem *problem);

// State dimension, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t chatter_problem_state_dim(const struct ChatterProblem *problem);

// Control dimension, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t chatter_problem_control_dim(const struct ChatterProblem *problem);

// Recommended sensitivity mode for the problem.
//
// # Safety
// `problem` must be null or a live handle.
enum ChatterSensitivity chatter_problem_default_sensitivity(const struct ChatterProblem *problem);

// Shoots for the initial costate. `p0` may be null with `p0_len == 0` for the
// zero guess; `options` may be null for defaults. A result handle is written
// whether or not the iteration converged; check `chatter_result_converged`.
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum ChatterStatus chatter_solve(const struct ChatterProblem *problem,
                                 const struct ChatterSolveOptions *options,
                                 const double *p0,
                                 size_t p0_len,
                                 struct ChatterResult **out);

// # Safety
// `result` must be null or a handle from this library, not yet freed.
void chatter_result_free(struct ChatterResult *result);

// # Safety
// `result` must be null or a live handle.
bool chatter_result_converged(const struct ChatterResult *result);

// # Safety
// `result` must be null or a live handle.
size_t chatter_result_iterations(const struct ChatterResult *result);

// Final transversality residual norm; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double chatter_result_residual(const struct ChatterResult *result);

// Total cost including the terminal cost; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double chatter_result_cost(const struct ChatterResult *result);

// Number of trajectory points (intervals + 1); 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t chatter_result_points(const struct ChatterResult *result);

// Copies the converged initial costate into `out` (capacity `len`).
//
// # Safety
// `out` must be valid for `len` writes.
enum ChatterStatus chatter_result_p0(const struct ChatterResult *result, double *out, size_t len);

// Copies time, state and costate of trajectory point `index`.
// `x_out` and `p_out` must each hold the state dimension.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum ChatterStatus chatter_result_point(const struct ChatterResult *result,
                                        size_t index,
                                        double *t_out,
                                        double *x_out,
                                        double *p_out,
                                        size_t len);

// Minimizes `Σ w_k h_k` over the simplex; writes `n` weights to `weights_out`.
//
// # Safety
// `h` must be valid for `n` reads and `weights_out` for `n` writes.
enum ChatterStatus chatter_solve_measure_lp(const double *h, size_t n, double *weights_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHATTER_H */
