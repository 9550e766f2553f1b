#ifndef TAILCAL_H
#define TAILCAL_H

/* Generated by cbindgen from tailcal-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit classes.
 */
typedef enum TailcalStatus {
  TailcalOk = 0,
  TailcalUsageError = 1,
  TailcalDataError = 2,
  TailcalNumericalError = 3,
  TailcalNullPointer = 4,
  TailcalPanic = 5,
} TailcalStatus;

/**
 * Opaque logit-matrix handle.
 */
typedef struct TailcalLogitSet TailcalLogitSet;

/**
 * Opaque temperature-vector handle.
 */
typedef struct TailcalTemps TailcalTemps;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *tailcal_version(void);

/**
 * Take the last error message for this thread, or NULL when none is
 * pending. The caller owns the returned string.
 */
char *tailcal_last_error(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a tailcal function that transfers string
 * ownership, and must not have been freed already. NULL is ignored.
 */
void tailcal_string_free(char *s);

/**
 * Load a logit file (binary container or CSV, chosen by extension).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TailcalStatus tailcal_logit_set_load(const char *path, struct TailcalLogitSet **out);

/**
 * Build a logit set from a dense row-major buffer and labels.
 *
 * # Safety
 * `values` must hold `num_samples * num_classes` doubles, `labels` must
 * hold `num_samples` entries, and `out` must be valid.
 */
enum TailcalStatus tailcal_logit_set_new(const double *values,
                                         const uint32_t *labels,
                                         size_t num_samples,
                                         size_t num_classes,
                                         struct TailcalLogitSet **out);

/**
 * # Safety
 * `set` must be a live handle from this library or NULL.
 */
void tailcal_logit_set_free(struct TailcalLogitSet *set);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `set` must be a live handle or NULL.
 */
size_t tailcal_logit_set_num_samples(const struct TailcalLogitSet *set);

/**
 * Number of classes; 0 for NULL.
 *
 * # Safety
 * `set` must be a live handle or NULL.
 */
size_t tailcal_logit_set_num_classes(const struct TailcalLogitSet *set);

/**
 * Fit the optimal scalar temperature by line search; line-search parameters
 * of 0 select the defaults (0.05, 10.0, 200 steps, 3 rounds, 0.1 factor).
 *
 * # Safety
 * `set` must be a live handle; `out_t` must be valid.
 */
enum TailcalStatus tailcal_fit_temperature(const struct TailcalLogitSet *set,
                                           double t_min,
                                           double t_max,
                                           size_t coarse_steps,
                                           size_t refine_rounds,
                                           double refine_factor,
                                           double *out_t);

/**
 * Constant temperature vector.
 *
 * # Safety
 * `out` must be valid.
 */
enum TailcalStatus tailcal_temps_constant(double t, size_t num_classes, struct TailcalTemps **out);

/**
 * Class-distribution-aware temperature vector `t_opt + gamma * f_c` from
 * raw per-class counts.
 *
 * # Safety
 * `counts` must hold `num_classes` entries; `out` must be valid.
 */
enum TailcalStatus tailcal_temps_cda(double t_opt,
                                     const uint64_t *counts,
                                     size_t num_classes,
                                     double gamma,
                                     struct TailcalTemps **out);

/**
 * Copy the temperature entries into `buf` (length `len >= num_classes`).
 *
 * # Safety
 * `temps` must be a live handle; `buf` must hold `len` doubles.
 */
enum TailcalStatus tailcal_temps_values(const struct TailcalTemps *temps, double *buf, size_t len);

/**
 * # Safety
 * `temps` must be a live handle from this library or NULL.
 */
void tailcal_temps_free(struct TailcalTemps *temps);

/**
 * Temperature-scale the logits and write the probabilities row-major into
 * `buf` (length `num_samples * num_classes`).
 *
 * # Safety
 * `set` and `temps` must be live handles; `buf` must hold `len` doubles.
 */
enum TailcalStatus tailcal_apply_temperature(const struct TailcalLogitSet *set,
                                             const struct TailcalTemps *temps,
                                             double *buf,
                                             size_t len);

/**
 * Full metric suite as a JSON report string (caller frees). `temps` may be
 * NULL for unit temperature; metric parameters of 0 select the defaults
 * (10 bins, 1e-3 threshold, 10 ranges).
 *
 * # Safety
 * `set` must be a live handle; `temps` a live handle or NULL; `out_json`
 * must be valid.
 */
enum TailcalStatus tailcal_metrics_report_json(const struct TailcalLogitSet *set,
                                               const struct TailcalTemps *temps,
                                               size_t num_bins,
                                               double tace_threshold,
                                               size_t tace_ranges,
                                               char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAILCAL_H */
