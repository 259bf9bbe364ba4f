#ifndef DGLAB_H
#define DGLAB_H

/* Generated from the dglab-capi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Matches the command-line exit codes: 0 success, 1 the
 * work ran but the verdict is negative, 2 the input was rejected, 3 a
 * numerical failure.
 */
typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_FAILED = 1,
  DG_STATUS_INVALID_INPUT = 2,
  DG_STATUS_NUMERICAL = 3,
} DgStatus;

/**
 * Opaque validated problem handle.
 */
typedef struct DgProblem DgProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying library, static storage.
 */
const char *dg_version(void);

/**
 * Message for the most recent failure on this thread, static until the
 * next failing call. Never null.
 */
const char *dg_last_error(void);

/**
 * Release a string returned through an out-parameter.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library.
 */
void dg_string_free(char *s);

/**
 * Parse and validate a problem description from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum DgStatus dg_problem_from_json(const char *json, struct DgProblem **out);

/**
 * Problem of a named library scenario.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum DgStatus dg_problem_builtin(const char *name, struct DgProblem **out);

/**
 * Release a problem handle.
 *
 * # Safety
 * `p` must be null or a pointer from dg_problem_from_json/builtin.
 */
void dg_problem_free(struct DgProblem *p);

/**
 * Run the hypothesis checks; writes a classification report as JSON.
 *
 * # Safety
 * `p` must be a live problem handle; `out_json` must be a valid pointer.
 */
enum DgStatus dg_check(const struct DgProblem *p, char **out_json);

/**
 * Run the full pipeline on an nx-by-ny grid and write the certificate as
 * JSON. `max_h` of zero keeps the default ladder length. Returns Failed
 * when the pipeline ran but the certificate did not validate.
 *
 * # Safety
 * `p` must be a live problem handle; `out_json` must be a valid pointer.
 */
enum DgStatus dg_certify(const struct DgProblem *p,
                         uintptr_t nx,
                         uintptr_t ny,
                         uintptr_t max_h,
                         char **out_json);

/**
 * Estimate and decay exponents for a declared parameter set (JSON).
 *
 * # Safety
 * `pack_json` must be a NUL-terminated string; out pointers must be valid.
 */
enum DgStatus dg_exponents(const char *pack_json, double *out_gamma, double *out_delta);

/**
 * Integrability exponent sigma; `epsilon_form` selects the strict-interior
 * variant.
 *
 * # Safety
 * `pack_json` must be a NUL-terminated string; `out` must be valid.
 */
enum DgStatus dg_sigma(const char *pack_json, bool epsilon_form, double *out);

/**
 * Largest starting value from which the one-step recursion contracts to
 * zero.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DgStatus dg_recursion_threshold(double l, double zeta, double delta, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DGLAB_H */
