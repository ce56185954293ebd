#ifndef VMC_H
#define VMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VmcStatus {
  VMC_STATUS_OK = 0,
  VMC_STATUS_NULL_POINTER = 1,
  VMC_STATUS_INVALID_INPUT = 2,
  /**
   * Malformed JSON or non-UTF-8 text.
   */
  VMC_STATUS_PARSE = 3,
  /**
   * Numerical breakdown or no feasible plan.
   */
  VMC_STATUS_SOLVER_FAILURE = 4,
  /**
   * The result carries no plan.
   */
  VMC_STATUS_NO_SOLUTION = 5,
  VMC_STATUS_PANIC = 6,
} VmcStatus;

typedef enum VmcAlgorithm {
  VMC_ALGORITHM_EXACT = 0,
  VMC_ALGORITHM_KSF = 1,
  VMC_ALGORITHM_KSFV = 2,
  VMC_ALGORITHM_KSFVG = 3,
} VmcAlgorithm;

typedef enum VmcRunStatus {
  VMC_RUN_STATUS_OPTIMAL = 0,
  VMC_RUN_STATUS_FEASIBLE = 1,
  VMC_RUN_STATUS_INFEASIBLE = 2,
  VMC_RUN_STATUS_NO_SOLUTION = 3,
} VmcRunStatus;

typedef struct VmcInstance VmcInstance;

typedef struct VmcResult VmcResult;

/**
 * Solver settings. Start from `vmc_solve_options_default`.
 */
typedef struct VmcSolveOptions {
  /**
   * Seconds; the kernel search budget or the exact solver limit.
   */
  double time_limit;
  /**
   * Relative gap; a negative value keeps the algorithm default.
   */
  double gap_tol;
  /**
   * Buckets to analyze; 0 analyzes all of them.
   */
  size_t nbar;
  double omega;
  double epsilon;
} VmcSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *vmc_last_error(void);

/**
 * Static description of a status code.
 */
const char *vmc_status_message(enum VmcStatus status);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void vmc_string_free(char *s);

/**
 * Generates a random instance.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum VmcStatus vmc_instance_generate(size_t num_servers,
                                     double alpha,
                                     double beta,
                                     double gamma,
                                     uint64_t seed,
                                     struct VmcInstance **out);

/**
 * Parses an instance from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid writable storage.
 */
enum VmcStatus vmc_instance_from_json(const char *json, struct VmcInstance **out);

/**
 * Serializes an instance to JSON. Release the string with `vmc_string_free`.
 *
 * # Safety
 * `inst` must be a live handle and `out` valid writable storage.
 */
enum VmcStatus vmc_instance_to_json(const struct VmcInstance *inst, char **out);

/**
 * Number of servers, or 0 for NULL.
 *
 * # Safety
 * `inst` must be NULL or a live handle.
 */
size_t vmc_instance_num_servers(const struct VmcInstance *inst);

/**
 * Number of VM types, or 0 for NULL.
 *
 * # Safety
 * `inst` must be NULL or a live handle.
 */
size_t vmc_instance_num_vm_types(const struct VmcInstance *inst);

/**
 * # Safety
 * `inst` must be NULL or a handle from this library, not yet freed.
 */
void vmc_instance_free(struct VmcInstance *inst);

struct VmcSolveOptions vmc_solve_options_default(void);

/**
 * Solves an instance. A run that finds no plan still succeeds and yields a
 * result whose status says so; `VMC_STATUS_SOLVER_FAILURE` is reserved for
 * numerical trouble.
 *
 * # Safety
 * `inst` must be a live handle, `options` NULL (defaults) or valid, and
 * `out` valid writable storage.
 */
enum VmcStatus vmc_solve(const struct VmcInstance *inst,
                         enum VmcAlgorithm algorithm,
                         const struct VmcSolveOptions *options,
                         struct VmcResult **out);

/**
 * # Safety
 * `res` must be a live handle and `out` valid writable storage.
 */
enum VmcStatus vmc_result_status(const struct VmcResult *res, enum VmcRunStatus *out);

/**
 * Objective of the plan; `VMC_STATUS_NO_SOLUTION` when there is none.
 *
 * # Safety
 * `res` must be a live handle and `out` valid writable storage.
 */
enum VmcStatus vmc_result_objective(const struct VmcResult *res, double *out);

/**
 * Wall time of the run in seconds, or a negative value for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
double vmc_result_time(const struct VmcResult *res);

/**
 * Plan as JSON (`x`, `y`, `z`, `x_new`); `VMC_STATUS_NO_SOLUTION` when
 * there is none. Release the string with `vmc_string_free`.
 *
 * # Safety
 * `res` must be a live handle and `out` valid writable storage.
 */
enum VmcStatus vmc_result_plan_json(const struct VmcResult *res, char **out);

/**
 * # Safety
 * `res` must be NULL or a handle from this library, not yet freed.
 */
void vmc_result_free(struct VmcResult *res);

/**
 * Counts the constraint violations of a plan given as JSON.
 *
 * # Safety
 * `inst` must be a live handle, `plan_json` a NUL-terminated string and
 * `violations` valid writable storage.
 */
enum VmcStatus vmc_check_plan_json(const struct VmcInstance *inst,
                                   const char *plan_json,
                                   size_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VMC_H */
