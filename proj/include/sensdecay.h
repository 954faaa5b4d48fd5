/* sensdecay: graph-structured nonlinear optimal control with certified
 * sensitivity-decay bounds.
 *
 * C interface over the C++ core. All objects are opaque handles; every
 * fallible call returns an sd_status and leaves a human-readable message in
 * sd_last_error() (thread-local). Handles are not thread-safe individually,
 * but distinct handles may be used from distinct threads.
 */
#ifndef SENSDECAY_H
#define SENSDECAY_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sd_status {
  SD_OK = 0,
  SD_ERR_INVALID_ARGUMENT = 1,
  SD_ERR_DIMENSION_MISMATCH = 2,
  SD_ERR_VALIDATION = 3,
  SD_ERR_NOT_POSITIVE_DEFINITE = 4,
  SD_ERR_NUMERIC = 5,
  SD_ERR_DIVERGENCE = 6,
  SD_ERR_SOLVER = 7,
  SD_ERR_PRECONDITION = 8,
  SD_ERR_CONFIG = 9,
  SD_ERR_IO = 10,
  SD_ERR_UNSUPPORTED = 11,
  SD_ERR_INTERNAL = 12
} sd_status;

typedef struct sd_config sd_config;
typedef struct sd_result sd_result;

const char* sd_version(void);

/* Message of the most recent failure on this thread; empty string if none. */
const char* sd_last_error(void);

/* Configuration: created with the built-in benchmark defaults (25-vehicle
 * chain, perturbation at node 12). Keys are dotted, e.g. "model.s",
 * "solver.h", "perturbation.i_star", "output.out_dir". */
sd_config* sd_config_create(void);
void sd_config_free(sd_config* cfg);
sd_status sd_config_load(sd_config* cfg, const char* path);
sd_status sd_config_set(sd_config* cfg, const char* key, const char* value);
sd_status sd_config_get(const sd_config* cfg, const char* key, char* buffer, size_t buffer_size);

/* Runs the configured experiment: builds the chain cost and its coupling
 * graph, derives the controllability certificate and decay constants, runs
 * the receding-horizon solve, evaluates every decay bound, fits the decay
 * rate, and writes per_node.csv / trajectory.csv / summary.json into the
 * configured output directory (pass out_dir to override, or NULL). */
sd_status sd_run(const sd_config* cfg, const char* out_dir, sd_result** out);

/* Certificate and decay constants only; no solve, no files. */
sd_status sd_certify(const sd_config* cfg, sd_result** out);

/* Re-verifies a stored per-node table against constants recomputed from the
 * configuration. */
sd_status sd_check(const sd_config* cfg, const char* per_node_csv, sd_result** out);

/* One experiment per sweep combination; per-cell failures are recorded in
 * <out_dir>/sweep.csv and do not abort the sweep. Outputs are written under
 * the configured (or overridden) output directory. */
sd_status sd_sweep(const sd_config* cfg, const char* out_dir, int jobs,
                   int* cells_failed, int* cells_violated);

/* Result accessors. Node indices are 1-based. A negative dist marks a node
 * unreachable from the perturbed one (its bound is vacuous and skipped). */
void sd_result_free(sd_result* result);
int sd_result_node_count(const sd_result* result);
sd_status sd_result_node_record(const sd_result* result, int node, int* dist, double* l2_norm,
                                double* bound, int* satisfied);

/* Scalar summary by key: C, sigma, mu, M_Q, M_R, C_init, C_prop, S, q, rho,
 * and for full runs also N, objective, slope, r2, empirical_rho, ... */
sd_status sd_result_scalar(const sd_result* result, const char* key, double* out);

int sd_result_all_satisfied(const sd_result* result); /* 1/0 */
int sd_result_mpc_steps(const sd_result* result);     /* -1 when not a run */
int sd_result_converged(const sd_result* result);     /* 1/0, -1 when not a run */

#ifdef __cplusplus
}
#endif

#endif /* SENSDECAY_H */
