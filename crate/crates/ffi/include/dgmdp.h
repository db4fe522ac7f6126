#ifndef DGMDP_H
#define DGMDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum DgmdpStatus {
  DGMDP_STATUS_OK = 0,
  DGMDP_STATUS_NULL_POINTER = 1,
  DGMDP_STATUS_INVALID_UTF8 = 2,
  DGMDP_STATUS_INVALID_JSON = 3,
  DGMDP_STATUS_INVALID_PARAMS = 4,
  DGMDP_STATUS_OUT_OF_RANGE = 5,
  DGMDP_STATUS_BUFFER_TOO_SMALL = 6,
  DGMDP_STATUS_NUMERIC_FAILURE = 7,
  DGMDP_STATUS_INTERNAL = 99,
} DgmdpStatus;

typedef enum DgmdpSolver {
  DGMDP_SOLVER_PLA = 0,
  DGMDP_SOLVER_GRID = 1,
} DgmdpSolver;

typedef enum DgmdpSetting {
  DGMDP_SETTING_INTEREST_ACCRUAL = 0,
  DGMDP_SETTING_BONUS_LIMIT = 1,
} DgmdpSetting;

// Solved value function for one task and agent.
typedef struct DgmdpSolution DgmdpSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *dgmdp_last_error_message(void);

// Solve the task described by `task_json` for the agent in `agent_json`.
//
// # Safety
// String arguments must be valid NUL-terminated strings; `out` must be a
// valid pointer. On success `*out` owns a handle to release with
// [`dgmdp_solution_free`].
enum DgmdpStatus dgmdp_solve(const char *task_json,
                             const char *agent_json,
                             enum DgmdpSolver solver,
                             struct DgmdpSolution **out);

// # Safety
// `solution` must be null or a handle from [`dgmdp_solve`] not yet freed.
void dgmdp_solution_free(struct DgmdpSolution *solution);

// Horizon of a solved task, or 0 for a null handle.
//
// # Safety
// `solution` must be null or a live handle.
size_t dgmdp_solution_tau(const struct DgmdpSolution *solution);

// `V(t, w)` and both action values at step `t` (1-based).
//
// # Safety
// `solution` must be a live handle; output pointers must be valid or null
// (null outputs are skipped).
enum DgmdpStatus dgmdp_solution_values(const struct DgmdpSolution *solution,
                                       size_t t,
                                       double w,
                                       double *value,
                                       double *q_defect,
                                       double *q_persist);

// Copy `tau` thresholds into `out`; `len` is the buffer length.
//
// # Safety
// `solution` must be a live handle and `out` valid for `len` writes.
enum DgmdpStatus dgmdp_solution_thresholds(const struct DgmdpSolution *solution,
                                           double *out,
                                           size_t len);

// Hazard curve from `q` posterior quantiles, `tau` values into `out`.
//
// # Safety
// `solution` must be a live handle and `out` valid for `len` writes.
enum DgmdpStatus dgmdp_solution_hazard(const struct DgmdpSolution *solution,
                                       size_t q,
                                       double *out,
                                       size_t len);

// Lottery overweighting factor for win probability `1 / alpha`.
//
// # Safety
// `out` must be a valid pointer.
enum DgmdpStatus dgmdp_prospect_weight(double alpha, double *out);

// Optimize a bonus schedule; `*out` receives the result as JSON, to be
// released with [`dgmdp_string_free`]. `tau` is used by the bonus-limit
// setting only.
//
// # Safety
// String arguments must be valid NUL-terminated strings; `out` must be a
// valid pointer.
enum DgmdpStatus dgmdp_optimize(enum DgmdpSetting setting,
                                const char *scenario_json,
                                const char *agent_json,
                                size_t tau,
                                char **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void dgmdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGMDP_H */
