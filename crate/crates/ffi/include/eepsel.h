#ifndef EEPSEL_H
#define EEPSEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Score table columns, in CSV order.
 */
typedef enum EepselMetric {
  EEPSEL_METRIC_MS_LEEP = 0,
  EEPSEL_METRIC_E_LEEP = 1,
  EEPSEL_METRIC_IOU_EEP = 2,
  EEPSEL_METRIC_SOFT_IOU_EEP = 3,
  EEPSEL_METRIC_BASE = 4,
} EepselMetric;

typedef enum EepselStatus {
  EEPSEL_STATUS_OK = 0,
  /**
   * Invalid input data or arguments.
   */
  EEPSEL_STATUS_VALIDATION = 1,
  /**
   * File could not be read or written, or already exists.
   */
  EEPSEL_STATUS_IO = 2,
  /**
   * Internal invariant violated.
   */
  EEPSEL_STATUS_INTERNAL = 3,
  EEPSEL_STATUS_NULL_POINTER = 4,
  /**
   * Output buffer too small; the required size was still reported.
   */
  EEPSEL_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A panic was caught at the boundary.
   */
  EEPSEL_STATUS_PANIC = 6,
} EepselStatus;

/**
 * A loaded, validated bundle.
 */
typedef struct EepselBundle EepselBundle;

/**
 * Scores of every ensemble of a bundle's pool, all metrics.
 */
typedef struct EepselScoreTable EepselScoreTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to fit) into `buf` and returns its full length in bytes without the NUL.
 */
size_t eepsel_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eepsel_version(void);

enum EepselStatus eepsel_bundle_load(const char *path, struct EepselBundle **out);

void eepsel_bundle_free(struct EepselBundle *bundle);

enum EepselStatus eepsel_bundle_num_samples(const struct EepselBundle *bundle, size_t *out);

enum EepselStatus eepsel_bundle_num_classes(const struct EepselBundle *bundle, size_t *out);

enum EepselStatus eepsel_bundle_num_sources(const struct EepselBundle *bundle, size_t *out);

/**
 * Scores every size-`ensemble_size` ensemble of the bundle's sources with
 * all metrics. `workers` 0 uses one thread per core.
 */
enum EepselStatus eepsel_score(const struct EepselBundle *bundle,
                               size_t ensemble_size,
                               size_t workers,
                               uint64_t memory_budget_bytes,
                               struct EepselScoreTable **out);

void eepsel_table_free(struct EepselScoreTable *table);

enum EepselStatus eepsel_table_num_rows(const struct EepselScoreTable *table, size_t *out);

/**
 * `metric` is an `EepselMetric` value.
 */
enum EepselStatus eepsel_table_value(const struct EepselScoreTable *table,
                                     size_t row,
                                     uint32_t metric,
                                     double *out);

/**
 * Writes the `+`-joined member ids of `row`. With a null or short buffer
 * the call fails with `BufferTooSmall` after storing the length in `needed`.
 */
enum EepselStatus eepsel_table_ensemble_key(const struct EepselScoreTable *table,
                                            size_t row,
                                            char *buf,
                                            size_t len,
                                            size_t *needed);

/**
 * Writes the table as `scores.csv`-format CSV. Existing files are kept
 * unless `force` is nonzero.
 */
enum EepselStatus eepsel_table_write_csv(const struct EepselScoreTable *table,
                                         const char *path,
                                         int32_t force);

uint64_t eepsel_num_combinations(size_t n, size_t k);

enum EepselStatus eepsel_pearson(const double *xs, const double *ys, size_t n, double *out);

enum EepselStatus eepsel_kendall_tau(const double *xs, const double *ys, size_t n, double *out);

/**
 * Weighted tau with hyperbolic weights ranked by `actual`.
 */
enum EepselStatus eepsel_weighted_kendall_tau(const double *predicted,
                                              const double *actual,
                                              size_t n,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEPSEL_H */
