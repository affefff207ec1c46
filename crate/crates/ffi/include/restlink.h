#ifndef RESTLINK_H
#define RESTLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_NULL_POINTER = 1,
  RL_STATUS_INVALID_UTF8 = 2,
  RL_STATUS_INVALID_ARGUMENT = 3,
  RL_STATUS_SCENARIO = 4,
  RL_STATUS_SEARCH = 5,
  RL_STATUS_STATS = 6,
  RL_STATUS_PANIC = 7,
} RlStatus;

/**
 * The outcome of one search run.
 */
typedef struct RlRun RlRun;

/**
 * A simulated service loaded from a scenario document.
 */
typedef struct RlScenario RlScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a successful call.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *rl_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void rl_string_free(char *s);

/**
 * Parses a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_scenario` a writable pointer.
 */
enum RlStatus rl_scenario_from_json(const char *json, struct RlScenario **out_scenario);

/**
 * Loads a scenario document from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_scenario` a writable pointer.
 */
enum RlStatus rl_scenario_load(const char *path, struct RlScenario **out_scenario);

/**
 * # Safety
 * `scenario` must be null or a handle from this library that is not used afterwards.
 */
void rl_scenario_free(struct RlScenario *scenario);

/**
 * Number of coverage targets of the scenario.
 *
 * # Safety
 * `scenario` must be a live handle and `out_count` a writable pointer.
 */
enum RlStatus rl_scenario_target_count(const struct RlScenario *scenario, size_t *out_count);

/**
 * Resets the service and executes one test given as a JSON array of statements.
 * Writes the execution result as JSON.
 *
 * # Safety
 * `scenario` must be a live handle not shared with another thread, `test_json` a
 * NUL-terminated string and `out_json` a writable pointer.
 */
enum RlStatus rl_scenario_execute(struct RlScenario *scenario,
                                  const char *test_json,
                                  char **out_json);

/**
 * Runs one search with default parameters on a copy of the scenario.
 * `algorithm` is one of `lt-mosa`, `mosa` or `mio`.
 *
 * # Safety
 * `scenario` must be a live handle, `algorithm` a NUL-terminated string and
 * `out_run` a writable pointer.
 */
enum RlStatus rl_search_run(const struct RlScenario *scenario,
                            const char *algorithm,
                            uint64_t evaluations,
                            uint64_t seed,
                            struct RlRun **out_run);

/**
 * # Safety
 * `run` must be null or a handle from this library that is not used afterwards.
 */
void rl_run_free(struct RlRun *run);

/**
 * Number of targets covered by the run's archive.
 *
 * # Safety
 * `run` must be a live handle and `out_count` a writable pointer.
 */
enum RlStatus rl_run_covered_count(const struct RlRun *run, size_t *out_count);

/**
 * Number of distinct faults seen during the run.
 *
 * # Safety
 * `run` must be a live handle and `out_count` a writable pointer.
 */
enum RlStatus rl_run_fault_count(const struct RlRun *run, size_t *out_count);

/**
 * The generated suite as a JSON array of `{test, covered, faults}` entries.
 *
 * # Safety
 * `run` must be a live handle and `out_json` a writable pointer.
 */
enum RlStatus rl_run_suite_json(const struct RlRun *run, char **out_json);

/**
 * Two-sided Wilcoxon rank-sum p-value of samples `a` and `b`.
 *
 * # Safety
 * `a` and `b` must point to `a_len` and `b_len` readable doubles; `out_p` must be writable.
 */
enum RlStatus rl_wilcoxon(const double *a,
                          size_t a_len,
                          const double *b,
                          size_t b_len,
                          double *out_p);

/**
 * Vargha-Delaney effect size: probability that a value of `a` exceeds one of `b`.
 *
 * # Safety
 * `a` and `b` must point to `a_len` and `b_len` readable doubles; `out_a12` must be writable.
 */
enum RlStatus rl_a12(const double *a, size_t a_len, const double *b, size_t b_len, double *out_a12);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESTLINK_H */
