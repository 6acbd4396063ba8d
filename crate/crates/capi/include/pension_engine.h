#ifndef PENSION_ENGINE_H
#define PENSION_ENGINE_H

/* Generated by cbindgen from pension-engine-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PeStatus {
  PE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PE_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PE_STATUS_INVALID_UTF8 = 2,
  /**
   * The scenario failed to parse or validate.
   */
  PE_STATUS_CONFIG = 3,
  /**
   * An evaluation point was outside the model's domain.
   */
  PE_STATUS_DOMAIN = 4,
  /**
   * A numerical failure (e.g. the layer series did not converge).
   */
  PE_STATUS_NUMERIC = 5,
  /**
   * The requested quantity is undefined (e.g. conditional density where
   * the marriage probability vanishes).
   */
  PE_STATUS_UNDEFINED = 6,
  /**
   * The scenario has no policy, but a policy-dependent quantity was asked
   * for.
   */
  PE_STATUS_NO_POLICY = 7,
  /**
   * An internal invariant failed.
   */
  PE_STATUS_INTERNAL = 8,
} PeStatus;

/**
 * Opaque engine handle: a parsed scenario plus lazily computed results.
 */
typedef struct PeEngine PeEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null when the last
 * call succeeded. Valid until the next failing call on the same thread.
 */
const char *pe_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *pe_version(void);

/**
 * Creates an engine from a TOML scenario document.
 *
 * On success writes the handle to `out` and returns `Ok`; the handle must be
 * released with `pe_engine_free`.
 *
 * # Safety
 * `toml` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PeStatus pe_engine_new_from_str(const char *toml, struct PeEngine **out);

/**
 * Creates an engine from a TOML scenario file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PeStatus pe_engine_new_from_file(const char *path, struct PeEngine **out);

/**
 * Releases an engine handle. Passing null is a no-op.
 *
 * # Safety
 * `handle` must have come from a `pe_engine_new_*` call and not have been
 * freed already.
 */
void pe_engine_free(struct PeEngine *handle);

/**
 * Runs the marital solver now (queries otherwise trigger it lazily).
 *
 * # Safety
 * `handle` must be a live engine handle.
 */
enum PeStatus pe_engine_solve(struct PeEngine *handle);

/**
 * Marriage probability `g(t)`.
 *
 * # Safety
 * `handle` must be a live engine handle and `out` a valid pointer.
 */
enum PeStatus pe_engine_marriage_probability(struct PeEngine *handle, double t, double *out);

/**
 * Conditional spouse-age density `f(y|t)`.
 *
 * # Safety
 * `handle` must be a live engine handle and `out` a valid pointer.
 */
enum PeStatus pe_engine_spouse_age_density(struct PeEngine *handle,
                                           double t,
                                           double y,
                                           double *out);

/**
 * Liability of the scenario's policy under its short rate.
 *
 * # Safety
 * `handle` must be a live engine handle and `out` a valid pointer.
 */
enum PeStatus pe_engine_liability(struct PeEngine *handle, double *out);

/**
 * Number of time nodes in the cashflow curve.
 *
 * # Safety
 * `handle` must be a live engine handle and `out` a valid pointer.
 */
enum PeStatus pe_engine_cashflow_len(struct PeEngine *handle, size_t *out);

/**
 * Copies the cashflow curve into caller-provided arrays of length `len`
 * (`pe_engine_cashflow_len`). Any of the destination pointers may be null to
 * skip that column.
 *
 * # Safety
 * `handle` must be a live engine handle; non-null destinations must point to
 * at least `len` doubles.
 */
enum PeStatus pe_engine_cashflow_copy(struct PeEngine *handle,
                                      double *times,
                                      double *rates,
                                      double *cumulative,
                                      size_t len);

/**
 * Monte Carlo estimate of the policy value: mean discounted payments over
 * `n_paths` simulated paths with the given seed.
 *
 * # Safety
 * `handle` must be a live engine handle; `out_value` and `out_std_error`
 * must be valid pointers.
 */
enum PeStatus pe_engine_estimate_policy_value(struct PeEngine *handle,
                                              uint64_t n_paths,
                                              uint64_t seed,
                                              double *out_value,
                                              double *out_std_error);

/**
 * Echoes the effective scenario as TOML into a newly allocated string; free
 * it with `pe_string_free`.
 *
 * # Safety
 * `handle` must be a live engine handle and `out` a valid pointer.
 */
enum PeStatus pe_engine_config_echo(struct PeEngine *handle, char **out);

/**
 * Frees a string returned by this library. Passing null is a no-op.
 *
 * # Safety
 * `ptr` must have come from this library and not have been freed already.
 */
void pe_string_free(char *ptr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PENSION_ENGINE_H */
