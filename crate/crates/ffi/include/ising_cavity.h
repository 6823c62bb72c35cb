#ifndef ISING_CAVITY_H
#define ISING_CAVITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IcStatus {
  IC_STATUS_OK = 0,
  IC_STATUS_NULL_POINTER = 1,
  IC_STATUS_INVALID_UTF8 = 2,
  IC_STATUS_INVALID_MODEL = 3,
  IC_STATUS_INVALID_PARAMETER = 4,
  IC_STATUS_DIVERGENT_MOMENT = 5,
  IC_STATUS_NON_CONVERGENCE = 6,
  IC_STATUS_NOT_SUBCRITICAL = 7,
  IC_STATUS_BUFFER_TOO_SMALL = 8,
  IC_STATUS_PANIC = 9,
  IC_STATUS_OTHER = 10,
} IcStatus;

/**
 * Degree law with its forward (size-biased minus one) law.
 */
typedef struct IcModel IcModel;

/**
 * Converged cavity-field population.
 */
typedef struct IcPopulation IcPopulation;

/**
 * Moments of a model. Divergent moments are reported as +infinity.
 */
typedef struct IcMoments {
  double mean_degree;
  double nu;
  double nu2;
  double nu3;
} IcMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *ic_last_error_message(void);

/**
 * Builds a model from JSON such as `{"kind": "poisson", "lambda": 3}`.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum IcStatus ic_model_from_json(const char *json, struct IcModel **out);

/**
 * # Safety
 * `model` must come from `ic_model_from_json` and not be freed twice.
 */
void ic_model_free(struct IcModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum IcStatus ic_model_moments(const struct IcModel *model, struct IcMoments *out);

/**
 * atanh(1/ν): 0 when ν diverges, +infinity when ν ≤ 1.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IcStatus ic_critical_beta(const struct IcModel *model, double *out);

/**
 * ξ(h) = atanh(tanh β · tanh h). `h` may be +infinity.
 *
 * # Safety
 * `out` must be valid.
 */
enum IcStatus ic_xi(double beta, double h, double *out);

/**
 * χ(β, 0+) for tanh β · ν < 1.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IcStatus ic_susceptibility_subcritical(const struct IcModel *model, double beta, double *out);

/**
 * Solves the cavity fixed point at (β, B > 0) from the plus start with
 * default solver settings and `population_size` samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IcStatus ic_fixed_point(const struct IcModel *model,
                             double beta,
                             double field,
                             size_t population_size,
                             uint64_t seed,
                             struct IcPopulation **out);

/**
 * # Safety
 * `pop` must be valid or NULL.
 */
size_t ic_population_len(const struct IcPopulation *pop);

/**
 * Copies the cavity fields into `buf`. Fails with `BUFFER_TOO_SMALL`
 * when `len` is below the population size.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum IcStatus ic_population_samples(const struct IcPopulation *pop, double *buf, size_t len);

/**
 * M(β, B) from `n` Monte Carlo draws over the root degree.
 *
 * # Safety
 * Pointers must be valid; `stderr_out` may be NULL.
 */
enum IcStatus ic_magnetization(const struct IcModel *model,
                               const struct IcPopulation *pop,
                               size_t n,
                               uint64_t seed,
                               double *value_out,
                               double *stderr_out);

/**
 * # Safety
 * `pop` must come from `ic_fixed_point` and not be freed twice.
 */
void ic_population_free(struct IcPopulation *pop);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISING_CAVITY_H */
