#ifndef HYPERSTAB_H
#define HYPERSTAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define HS_MODE_OPEN_LOOP 0

#define HS_MODE_STATE_FEEDBACK 1

#define HS_MODE_OUTPUT_FEEDBACK 2

/**
 * Result of every fallible call. The first four values match the CLI exit codes.
 */
typedef enum hs_status {
  HS_STATUS_OK = 0,
  /**
   * An assumption or certificate failed.
   */
  HS_STATUS_ASSUMPTION_FAILED = 1,
  /**
   * Malformed input: configuration, mode, argument value or path.
   */
  HS_STATUS_INVALID_INPUT = 2,
  /**
   * The simulation diverged; the truncated trajectory is still returned.
   */
  HS_STATUS_DIVERGED = 3,
  HS_STATUS_NULL_POINTER = 4,
  /**
   * A panic was caught at the boundary.
   */
  HS_STATUS_INTERNAL = 5,
} hs_status;

/**
 * A loaded scenario.
 */
typedef struct hs_scenario hs_scenario;

/**
 * A complete synthesis for one scenario.
 */
typedef struct hs_synthesis hs_synthesis;

/**
 * A recorded closed-loop run.
 */
typedef struct hs_trajectory hs_trajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Message of the last error on this thread, or null. Valid until the next failing call on the
 * same thread.
 */
const char *hs_last_error(void);

void hs_string_free(char *s);

/**
 * Loads a scenario file; relative paths inside it resolve against its directory.
 */
enum hs_status hs_scenario_load(const char *path, struct hs_scenario **out);

/**
 * Parses a scenario from JSON text; `base_dir` (may be null for ".") anchors relative paths.
 */
enum hs_status hs_scenario_from_json(const char *json,
                                     const char *base_dir,
                                     struct hs_scenario **out);

void hs_scenario_free(struct hs_scenario *s);

/**
 * Checks the three assumptions. Writes the JSON report to `report` (may be null) and returns
 * [`HsStatus::AssumptionFailed`] if any fails.
 */
enum hs_status hs_validate(const struct hs_scenario *scn, char **report);

/**
 * Solves kernels, delay forms and both gain designs. `cache_dir` may be null.
 */
enum hs_status hs_synthesize(const struct hs_scenario *scn,
                             const char *cache_dir,
                             struct hs_synthesis **out);

void hs_synthesis_free(struct hs_synthesis *s);

/**
 * The synthesis record as JSON, including the scenario's configured filter if any.
 */
enum hs_status hs_synthesis_json(const struct hs_synthesis *syn, char **out);

/**
 * Simulates the scenario's configuration in `mode` (one of the `HS_MODE_*` values). Output
 * feedback needs the scenario to configure its filter. A divergent run still yields its
 * truncated trajectory along with [`HsStatus::Diverged`].
 */
enum hs_status hs_simulate(const struct hs_synthesis *syn,
                           uint32_t mode,
                           struct hs_trajectory **out);

void hs_trajectory_free(struct hs_trajectory *t);

/**
 * Number of recorded samples, 0 for a null handle.
 */
size_t hs_trajectory_len(const struct hs_trajectory *t);

bool hs_trajectory_diverged(const struct hs_trajectory *t);

/**
 * Copies the sample times into `buf`, which must hold [`hs_trajectory_len`] values.
 */
enum hs_status hs_trajectory_times(const struct hs_trajectory *t, double *buf, size_t len);

/**
 * Copies the state χ-norms into `buf`.
 */
enum hs_status hs_trajectory_chi_state(const struct hs_trajectory *t, double *buf, size_t len);

/**
 * Copies the observer-error χ-norms into `buf` (NaN where no observer ran).
 */
enum hs_status hs_trajectory_chi_error(const struct hs_trajectory *t, double *buf, size_t len);

enum hs_status hs_trajectory_write_csv(const struct hs_trajectory *t, const char *path);

/**
 * Least-squares decay rate and `r²` of `ln χ` on `t ≥ t_start`.
 */
enum hs_status hs_fit_decay(const struct hs_trajectory *t,
                            double t_start,
                            double *rate,
                            double *r2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERSTAB_H */
