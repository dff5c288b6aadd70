/* socbal — decentralized multi-agent SoC balancing for distributed energy
 * storage: consensus-expanded observations, demand-balanced actions, and
 * per-unit actor-critic training behind a C interface.
 *
 * All functions are synchronous. A socbal_run handle wraps one loaded
 * configuration plus optional overrides; it is not thread-safe, but distinct
 * handles are independent. On failure, socbal_last_error(run) returns a
 * message describing the most recent error on that handle.
 */
#ifndef SOCBAL_H
#define SOCBAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SOCBAL_API __declspec(dllexport)
#else
#define SOCBAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum socbal_status {
    SOCBAL_OK = 0,
    SOCBAL_ERR_INVALID_ARG = 1,
    SOCBAL_ERR_CONFIG = 2,      /* configuration rejected (message has the key path) */
    SOCBAL_ERR_IO = 3,          /* file could not be read or written */
    SOCBAL_ERR_RUNTIME = 4,     /* simulation or training failure */
    SOCBAL_ERR_UNCONVERGED = 5, /* unconverged balancing steps above the allowed fraction */
    SOCBAL_ERR_VIOLATIONS = 6   /* decentralization audit found violations */
} socbal_status;

/* Opaque run handle: one parsed configuration plus overrides. */
typedef struct socbal_run socbal_run;

typedef void (*socbal_progress_fn)(int episode, int total_episodes, double mean_reward,
                                   void* user);

SOCBAL_API const char* socbal_version(void);

/* level: debug|info|warn|error|off (also settable via the SOCBAL_LOG env var) */
SOCBAL_API void socbal_set_log_level(const char* level);

/* Creates a run from a JSON configuration file. On failure *out_run is NULL
 * and socbal_last_error(NULL) carries the message. */
SOCBAL_API socbal_status socbal_run_create(const char* config_path, socbal_run** out_run);
SOCBAL_API socbal_status socbal_run_create_from_json(const char* config_json,
                                                     socbal_run** out_run);
SOCBAL_API void socbal_run_destroy(socbal_run* run);

SOCBAL_API const char* socbal_last_error(const socbal_run* run);

/* Overrides applied on top of the configuration file. */
SOCBAL_API socbal_status socbal_run_set_seed(socbal_run* run, uint64_t seed);
SOCBAL_API socbal_status socbal_run_set_out_dir(socbal_run* run, const char* dir);
SOCBAL_API socbal_status socbal_run_set_episodes(socbal_run* run, int episodes);
SOCBAL_API socbal_status socbal_run_set_horizon(socbal_run* run, int horizon_steps);
SOCBAL_API socbal_status socbal_run_set_workers(socbal_run* run, int workers);
SOCBAL_API socbal_status socbal_run_set_drag_mode(socbal_run* run, const char* mode);
SOCBAL_API socbal_status socbal_run_set_progress(socbal_run* run, socbal_progress_fn fn,
                                                 void* user);

/* Canonical hash of the resolved configuration (hex, NUL-terminated). */
SOCBAL_API socbal_status socbal_run_config_hash(socbal_run* run, char* buf, size_t buf_len);

/* Trains and writes metrics.csv, checkpoints.json + checkpoints/, and
 * config_resolved.json under the output directory. */
SOCBAL_API socbal_status socbal_train(socbal_run* run);

/* Greedy rollout of saved checkpoints; writes eval_trace.csv. */
SOCBAL_API socbal_status socbal_evaluate(socbal_run* run, const char* checkpoint_manifest);

/* Capacity-proportional allocation rollout; writes baseline_trace.csv. */
SOCBAL_API socbal_status socbal_baseline(socbal_run* run);

/* Paired counterfactual/factual training; writes metrics_counterfactual.csv
 * and metrics_factual.csv. */
SOCBAL_API socbal_status socbal_ablate(socbal_run* run);

/* Short tagged run plus the decentralization audit. *out_violations receives
 * the violation count; violations are also listed on the log. */
SOCBAL_API socbal_status socbal_audit(socbal_run* run, int* out_violations);

/* Runs average consensus on initial_values over the configured topology.
 * count must equal the node count; out_estimates (length count) and
 * out_iterations are optional. print_trace != 0 dumps the iteration table to
 * stdout. */
SOCBAL_API socbal_status socbal_consensus_demo(socbal_run* run, const double* initial_values,
                                               size_t count, int print_trace,
                                               double* out_estimates, int* out_iterations);

#ifdef __cplusplus
}
#endif

#endif /* SOCBAL_H */
