#ifndef MCD_H
#define MCD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum McdStatus {
  MCD_STATUS_OK = 0,
  MCD_STATUS_NULL_POINTER = 1,
  MCD_STATUS_INVALID_UTF8 = 2,
  MCD_STATUS_PARSE = 3,
  MCD_STATUS_INVALID_GRAPH = 4,
  MCD_STATUS_INVALID_QUERY = 5,
  MCD_STATUS_ZERO_PROBABILITY = 6,
  MCD_STATUS_INVALID_MODEL = 7,
  MCD_STATUS_IO = 8,
  MCD_STATUS_BUFFER_TOO_SMALL = 9,
  MCD_STATUS_PANIC = 10,
} McdStatus;

/**
 * A validated directed acyclic graph.
 */
typedef struct McdDag McdDag;

/**
 * A trained rationalizer loaded from a checkpoint.
 */
typedef struct McdModel McdModel;

/**
 * A discrete structural causal model supporting exact queries.
 */
typedef struct McdScm McdScm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *mcd_last_error(void);

/**
 * Parses a graph from JSON `{"nodes": [...], "edges": [[parent, child], ...]}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum McdStatus mcd_dag_from_json(const char *json, struct McdDag **out);

/**
 * # Safety
 * `dag` must be null or a handle from [`mcd_dag_from_json`] not yet freed.
 */
void mcd_dag_free(struct McdDag *dag);

/**
 * Writes whether `a` and `b` are d-separated given `c` into `out`.
 *
 * # Safety
 * `dag` must be a live handle, `a`, `b`, `c` NUL-terminated strings (`c`
 * may be empty), and `out` writable.
 */
enum McdStatus mcd_dag_is_d_separated(const struct McdDag *dag,
                                      const char *a,
                                      const char *b,
                                      const char *c,
                                      bool *out);

/**
 * Writes an unblocked path such as `"X_T <- U -> X_S"` into `*out`, or null
 * when the sets are d-separated. Release the string with [`mcd_string_free`].
 *
 * # Safety
 * As for [`mcd_dag_is_d_separated`]; `out` must be writable.
 */
enum McdStatus mcd_dag_active_path(const struct McdDag *dag,
                                   const char *a,
                                   const char *b,
                                   const char *c,
                                   char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void mcd_string_free(char *s);

/**
 * The confounded four-node toy model `U → X_T`, `U → X_S → Y_S` with the
 * given confounder strength and label fidelity.
 *
 * # Safety
 * `out` must be writable.
 */
enum McdStatus mcd_scm_toy(double correlation_strength, double label_fidelity, struct McdScm **out);

/**
 * Random binary CPTs on `dag`, drawn from `seed`.
 *
 * # Safety
 * `dag` must be a live handle and `out` writable.
 */
enum McdStatus mcd_scm_random_binary(const struct McdDag *dag, uint64_t seed, struct McdScm **out);

/**
 * # Safety
 * `scm` must be null or a live handle, freed once.
 */
void mcd_scm_free(struct McdScm *scm);

/**
 * Exact `P(target | evidence)`; both are `NAME=VALUE` lists, evidence may
 * be empty.
 *
 * # Safety
 * `scm` must be a live handle, the strings NUL-terminated, `out` writable.
 */
enum McdStatus mcd_scm_query(const struct McdScm *scm,
                             const char *target,
                             const char *evidence,
                             double *out);

/**
 * Largest conditional-independence violation between `a` and `b` given `c`.
 *
 * # Safety
 * As for [`mcd_scm_query`].
 */
enum McdStatus mcd_scm_ci_gap(const struct McdScm *scm,
                              const char *a,
                              const char *b,
                              const char *c,
                              double *out);

/**
 * Loads a checkpoint written by `mcd train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum McdStatus mcd_model_load(const char *path, struct McdModel **out);

/**
 * # Safety
 * `model` must be null or a live handle, freed once.
 */
void mcd_model_free(struct McdModel *model);

/**
 * Selects a rationale for whitespace-separated `text` (truncated to 256
 * tokens). Writes one 0/1 byte per token into `mask` (capacity `cap`), the
 * token count into `len` and the predicted probability of class 1 into
 * `prob_positive`. When `cap` is too small, only `len` is written and
 * [`McdStatus::BufferTooSmall`] is returned.
 *
 * # Safety
 * `model` must be a live handle, `text` NUL-terminated, `mask` valid for
 * `cap` bytes (may be null when `cap` is 0), `len` and `prob_positive`
 * writable.
 */
enum McdStatus mcd_model_explain(const struct McdModel *model,
                                 const char *text,
                                 uint8_t *mask,
                                 size_t cap,
                                 size_t *len,
                                 double *prob_positive);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCD_H */
