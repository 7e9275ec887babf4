#ifndef B92SIM_H
#define B92SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum B92Status {
  B92_STATUS_OK = 0,
  B92_STATUS_NULL_POINTER = 1,
  B92_STATUS_INVALID_ARGUMENT = 2,
  B92_STATUS_CONFIG = 3,
  B92_STATUS_INFEASIBLE = 4,
  B92_STATUS_IO = 5,
  B92_STATUS_SIMULATION = 6,
  B92_STATUS_PANIC = 7,
} B92Status;

typedef enum B92Channel {
  B92_CHANNEL_HERALD = 0,
  B92_CHANNEL_D0 = 1,
  B92_CHANNEL_D1 = 2,
} B92Channel;

typedef enum B92Strategy {
  B92_STRATEGY_A = 0,
  B92_STRATEGY_B = 1,
} B92Strategy;

/**
 * Loaded run configuration.
 */
typedef struct B92Config B92Config;

/**
 * Tag streams of one simulated run.
 */
typedef struct B92Run B92Run;

/**
 * Window markers in ps of detection delay, half-open.
 */
typedef struct B92Windows {
  int64_t l1;
  int64_t r1;
  int64_t l2;
  int64_t r2;
} B92Windows;

typedef struct B92Metrics {
  double key_rate_khz;
  double qber_pct;
  double asymmetry_pct;
  uint64_t key_length;
  struct B92Windows windows;
} B92Metrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *b92_last_error(void);

/**
 * Loads and validates a TOML run configuration.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum B92Status b92_config_load(const char *path, struct B92Config **out);

/**
 * # Safety
 * `cfg` must come from [`b92_config_load`] and not be used afterwards.
 */
void b92_config_free(struct B92Config *cfg);

/**
 * Overrides the master seed, run length and iteration count. A zero
 * `iterations` or a negative `duration_s` leaves that field unchanged.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum B92Status b92_config_set_run(struct B92Config *cfg,
                                  uint64_t seed,
                                  double duration_s,
                                  size_t iterations);

/**
 * Simulates one run with the given seed.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum B92Status b92_run(const struct B92Config *cfg, uint64_t seed, struct B92Run **out);

/**
 * # Safety
 * `run` must come from [`b92_run`] and not be used afterwards.
 */
void b92_run_free(struct B92Run *run);

/**
 * Borrows one channel's time tags (ps, strictly increasing). The array
 * lives as long as `run`.
 *
 * # Safety
 * `run` must be a live handle; `tags` and `len` must be writable.
 */
enum B92Status b92_run_tags(const struct B92Run *run,
                            enum B92Channel channel,
                            const uint64_t **tags,
                            size_t *len);

/**
 * Run length in ps.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
uint64_t b92_run_duration_ps(const struct B92Run *run);

/**
 * Optimises the coincidence windows of a run and reports the sifted key.
 *
 * # Safety
 * `cfg` and `run` must be live handles; `out` must be writable.
 */
enum B92Status b92_run_analyze(const struct B92Config *cfg,
                               const struct B92Run *run,
                               enum B92Strategy strategy,
                               struct B92Metrics *out);

/**
 * Runs the configured batch with both strategies and returns the summary
 * as JSON. Release the string with [`b92_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle; `json` must be writable.
 */
enum B92Status b92_simulate_summary(const struct B92Config *cfg, char **json);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void b92_string_free(char *s);

/**
 * Phase-matching temperature (°C) of a crystal data file.
 *
 * # Safety
 * `crystal_path` must be a NUL-terminated string; `temperature_c` must be
 * writable.
 */
enum B92Status b92_phase_match_temperature(const char *crystal_path,
                                           double pump_nm,
                                           double length_mm,
                                           double *temperature_c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* B92SIM_H */
