#ifndef CKGE_H
#define CKGE_H

/* Generated by cbindgen from ckge-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes for fallible calls.
 */
typedef enum CkgeStatus {
  CKGE_STATUS_OK = 0,
  CKGE_STATUS_IO = 1,
  CKGE_STATUS_PARSE = 2,
  CKGE_STATUS_VALIDATION = 3,
  CKGE_STATUS_INFEASIBLE = 4,
  CKGE_STATUS_BOUNDS = 5,
  CKGE_STATUS_NUMERIC = 6,
  CKGE_STATUS_CONFIG = 7,
  CKGE_STATUS_CONTRACT = 8,
  CKGE_STATUS_MISSING_ARTIFACT = 9,
  CKGE_STATUS_DOMAIN = 10,
  CKGE_STATUS_SAMPLING = 11,
  CKGE_STATUS_NULL_POINTER = 12,
  CKGE_STATUS_UTF8 = 13,
  CKGE_STATUS_PANIC = 14,
} CkgeStatus;

/**
 * Opaque snapshot-sequence handle.
 */
typedef struct CkgeDataset CkgeDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *ckge_version(void);

/**
 * Message of the most recent error on this thread, or null when none.
 * The caller owns the returned string (free with [`ckge_string_free`]).
 */
char *ckge_last_error(void);

/**
 * Frees a string previously returned by this library.
 *
 * # Safety
 * `s` must be a pointer returned by a `ckge_*` function and not yet freed.
 */
void ckge_string_free(char *s);

/**
 * Loads a snapshot-sequence directory. Returns null on error (see
 * [`ckge_last_error`]).
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string or null.
 */
struct CkgeDataset *ckge_dataset_load(const char *dir);

/**
 * # Safety
 * `ds` must be a pointer from [`ckge_dataset_load`], freed at most once.
 */
void ckge_dataset_free(struct CkgeDataset *ds);

/**
 * Number of snapshots, or -1 on a null handle.
 *
 * # Safety
 * `ds` must be a live pointer from [`ckge_dataset_load`] or null.
 */
int64_t ckge_dataset_snapshots(const struct CkgeDataset *ds);

/**
 * Cumulative entity count |E_i|, or -1 on bad arguments.
 *
 * # Safety
 * `ds` must be a live pointer from [`ckge_dataset_load`] or null.
 */
int64_t ckge_dataset_entities(const struct CkgeDataset *ds, uint64_t snapshot);

/**
 * Cumulative relation count |R_i|, or -1 on bad arguments.
 *
 * # Safety
 * `ds` must be a live pointer from [`ckge_dataset_load`] or null.
 */
int64_t ckge_dataset_relations(const struct CkgeDataset *ds, uint64_t snapshot);

/**
 * New triples at snapshot `i` in one split (0 = train, 1 = valid,
 * 2 = test), or -1 on bad arguments.
 *
 * # Safety
 * `ds` must be a live pointer from [`ckge_dataset_load`] or null.
 */
int64_t ckge_dataset_triples(const struct CkgeDataset *ds, uint64_t snapshot, uint32_t split);

/**
 * Generates a growing snapshot sequence from a base triple TSV.
 * `scenario_json` carries the scenario as JSON, e.g.
 * `{"kind":"entity-growth","n_snapshots":5,"seed":7,
 *   "test_fraction":0.1,"valid_fraction":0.05}`.
 *
 * # Safety
 * All pointers must be valid NUL-terminated strings or null.
 */
enum CkgeStatus ckge_generate(const char *base_tsv, const char *scenario_json, const char *out_dir);

/**
 * Runs a full experiment from a JSON config file (see the repository README
 * for the schema). Artifacts land in the config's output directory.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string or null.
 */
enum CkgeStatus ckge_run(const char *config_path);

/**
 * Recomputes the report for a run directory and returns it as text
 * (caller frees). Null on error.
 *
 * # Safety
 * `run_dir` must be a valid NUL-terminated string or null.
 */
char *ckge_report(const char *run_dir);

/**
 * Verifies every analytic gradient against central finite differences.
 */
enum CkgeStatus ckge_gradcheck(uint64_t instances, uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CKGE_H */
