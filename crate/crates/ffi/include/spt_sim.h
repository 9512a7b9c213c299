#ifndef SPT_SIM_H
#define SPT_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SPT_SIDEBAND_RSB 0

#define SPT_SIDEBAND_BSB 1

typedef enum SptStatus {
  SPT_STATUS_OK = 0,
  SPT_STATUS_INVALID_ARGUMENT = 1,
  SPT_STATUS_NULL_POINTER = 2,
  SPT_STATUS_NUMERICAL = 3,
  SPT_STATUS_PANIC = 4,
} SptStatus;

/**
 * One-cycle population map.
 */
typedef struct SptMap SptMap;

/**
 * Fock-state populations.
 */
typedef struct SptPopulation SptPopulation;

typedef struct SptGainReport {
  size_t n_meas;
  double r_star;
  double f_q;
  double f_sql;
  double gain;
  double gain_db;
} SptGainReport;

/**
 * Inputs of [`spt_lindblad_run`]. A non-positive `tau_decay` selects
 * `10 / gamma`.
 */
typedef struct SptLindbladParams {
  uint32_t n0;
  int sideband;
  double eta;
  double omega;
  double delta;
  double gamma;
  double tau_decay;
  double beta;
  size_t dim;
  uint32_t repetitions;
} SptLindbladParams;

typedef struct SptLindbladResult {
  /**
   * Total-variation distance to the ideal map after the last cycle.
   */
  double tv_ideal;
  /**
   * Total-variation distance to the analytic trapped state.
   */
  double tv_analytic;
  double off_support_mass;
  double max_excited_after_reset;
  double max_trace_error;
  double min_eigenvalue;
} SptLindbladResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *spt_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *spt_last_error_message(void);

/**
 * Thermal populations with mean phonon number `mean_n`, truncated to `dim`
 * levels and renormalized.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SptStatus spt_population_thermal(double mean_n, size_t dim, struct SptPopulation **out);

/**
 * Thermal populations at inverse temperature `beta`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SptStatus spt_population_thermal_beta(double beta, size_t dim, struct SptPopulation **out);

/**
 * Populations copied from `probs[0..len]`, which must sum to one.
 *
 * # Safety
 * `probs` must point to `len` readable doubles; `out` must be valid for writes.
 */
enum SptStatus spt_population_from_array(const double *probs,
                                         size_t len,
                                         struct SptPopulation **out);

/**
 * Number of Fock levels, or 0 for a NULL handle.
 *
 * # Safety
 * `pop` must be NULL or a live handle.
 */
size_t spt_population_dim(const struct SptPopulation *pop);

/**
 * Copies the populations into `buf`, which must hold at least
 * `spt_population_dim(pop)` values.
 *
 * # Safety
 * `pop` must be a live handle and `buf` valid for `len` writes.
 */
enum SptStatus spt_population_copy_to(const struct SptPopulation *pop, double *buf, size_t len);

/**
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum SptStatus spt_population_entropy(const struct SptPopulation *pop, double *out);

/**
 * # Safety
 * `pop` must be NULL or a handle not yet freed.
 */
void spt_population_free(struct SptPopulation *pop);

/**
 * Population map of one trapping cycle for trap index `n0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SptStatus spt_map_new(uint32_t n0, int sideband_code, size_t dim, struct SptMap **out);

/**
 * # Safety
 * `map` must be NULL or a handle not yet freed.
 */
void spt_map_free(struct SptMap *map);

/**
 * Applies the map `repetitions` times.
 *
 * # Safety
 * `map` and `pop` must be live handles; `out` must be valid for writes.
 */
enum SptStatus spt_map_iterate(const struct SptMap *map,
                               const struct SptPopulation *pop,
                               uint32_t repetitions,
                               struct SptPopulation **out);

/**
 * Infinite-repetition limit of the trapping protocol.
 *
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum SptStatus spt_trapped_state(const struct SptPopulation *pop,
                                 uint32_t n0,
                                 int sideband_code,
                                 struct SptPopulation **out);

/**
 * Population of level `n` after a displacement of amplitude `r`.
 *
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum SptStatus spt_overlap(const struct SptPopulation *pop, size_t n, double r, double *out);

/**
 * Fisher information of measuring level `n` at amplitude `r`.
 *
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum SptStatus spt_fisher(const struct SptPopulation *pop, size_t n, double r, double *out);

/**
 * Maximal Fisher information of measuring level `n` on the grid
 * `r_min, r_min + r_step, …, r_max`, and its gain over the ground state.
 *
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum SptStatus spt_gain_report(const struct SptPopulation *pop,
                               size_t n,
                               double r_min,
                               double r_max,
                               double r_step,
                               struct SptGainReport *out);

/**
 * Master-equation simulation of `repetitions` trapping cycles from a
 * thermal state at inverse temperature `beta`.
 *
 * # Safety
 * `params` must be readable and `out` valid for writes.
 */
enum SptStatus spt_lindblad_run(const struct SptLindbladParams *params,
                                struct SptLindbladResult *out);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len`) and returns the full message length, or 0 if there is none.
 *
 * # Safety
 * `buf` must be NULL or valid for `len` writes.
 */
size_t spt_last_error_copy(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPT_SIM_H */
