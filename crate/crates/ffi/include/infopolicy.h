#ifndef INFOPOLICY_H
#define INFOPOLICY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum IpStatus {
  IP_STATUS_OK = 0,
  IP_STATUS_NULL_POINTER = 1,
  IP_STATUS_INVALID_ARGUMENT = 2,
  IP_STATUS_DIMENSION_MISMATCH = 3,
  IP_STATUS_INVALID_DISTRIBUTION = 4,
  IP_STATUS_INVALID_KERNEL = 5,
  IP_STATUS_NOT_INTERIOR = 6,
  IP_STATUS_OUT_OF_RANGE = 7,
  IP_STATUS_UNATTAINABLE = 8,
  IP_STATUS_NOT_CONVERGED = 9,
  IP_STATUS_BUFFER_TOO_SMALL = 10,
  IP_STATUS_PANIC = 11,
} IpStatus;

/**
 * Probability vector on a finite set.
 */
typedef struct IpDistribution IpDistribution;

/**
 * Row-stochastic matrix.
 */
typedef struct IpKernel IpKernel;

/**
 * Solution of a rate-utility problem at one multiplier.
 */
typedef struct IpRateUtilityPoint IpRateUtilityPoint;

/**
 * Source, utilities and optional support mask of a rate-utility problem.
 */
typedef struct IpRateUtilityProblem IpRateUtilityProblem;

typedef struct IpGibbsSummary {
  double log_partition;
  double free_energy;
  double expected_utility;
  double utility_variance;
  double kl_cost;
} IpGibbsSummary;

typedef struct IpPointSummary {
  double beta;
  double rate;
  double utility;
  double residual;
  size_t iterations;
  size_t rows;
  size_t cols;
} IpPointSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * successful call. Valid until the next call into this library on the same
 * thread.
 */
const char *ip_last_error(void);

/**
 * # Safety
 * `weights` must point to `len` readable doubles; `out` must be writable.
 */
enum IpStatus ip_distribution_new(const double *weights, size_t len, struct IpDistribution **out);

/**
 * # Safety
 * `handle` must come from `ip_distribution_new` and not be freed twice.
 */
void ip_distribution_free(struct IpDistribution *handle);

/**
 * # Safety
 * `handle` must be a live distribution; `out` must be writable.
 */
enum IpStatus ip_distribution_len(const struct IpDistribution *handle, size_t *out);

/**
 * # Safety
 * `handle` must be a live distribution; `out` must hold `capacity` doubles.
 */
enum IpStatus ip_distribution_weights(const struct IpDistribution *handle,
                                      double *out,
                                      size_t capacity);

/**
 * `D(p ‖ q)`; `INFINITY` when `p` is not absolutely continuous w.r.t. `q`.
 *
 * # Safety
 * `p` and `q` must be live distributions; `out` must be writable.
 */
enum IpStatus ip_kl_divergence(const struct IpDistribution *p,
                               const struct IpDistribution *q,
                               double *out);

/**
 * Shannon entropy in nats.
 *
 * # Safety
 * `p` must be a live distribution; `out` must be writable.
 */
enum IpStatus ip_entropy(const struct IpDistribution *p, double *out);

/**
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum IpStatus ip_kernel_new(const double *data, size_t rows, size_t cols, struct IpKernel **out);

/**
 * # Safety
 * `handle` must come from `ip_kernel_new` and not be freed twice.
 */
void ip_kernel_free(struct IpKernel *handle);

/**
 * Mutual information of `p ⋊ k` in nats.
 *
 * # Safety
 * `p` and `k` must be live handles; `out` must be writable.
 */
enum IpStatus ip_mutual_information(const struct IpDistribution *p,
                                    const struct IpKernel *k,
                                    double *out);

/**
 * Blahut-Arimoto capacity. `input` receives the capacity-achieving input
 * distribution and must hold at least `rows` doubles; it may be null when
 * `input_capacity` is zero and the input is not wanted.
 *
 * # Safety
 * `k` must be a live kernel; pointers must be valid for their sizes.
 */
enum IpStatus ip_channel_capacity(const struct IpKernel *k,
                                  double tol,
                                  double *capacity,
                                  double *input,
                                  size_t input_capacity);

/**
 * Gibbs policy `q e^{βu} / Z`. `policy` must hold the prior's length.
 *
 * # Safety
 * `prior` must be a live distribution; `utilities` must hold `len` doubles;
 * `policy` must hold `policy_capacity` doubles; `summary` may be null.
 */
enum IpStatus ip_gibbs_policy(const struct IpDistribution *prior,
                              const double *utilities,
                              size_t len,
                              double beta,
                              double *policy,
                              size_t policy_capacity,
                              struct IpGibbsSummary *summary);

/**
 * `mask` is null for no restriction, otherwise `rows * cols` bytes where
 * nonzero permits the action.
 *
 * # Safety
 * `source` must be a live distribution with `rows` outcomes; `utilities`
 * must hold `rows * cols` doubles; `out` must be writable.
 */
enum IpStatus ip_rate_utility_problem_new(const struct IpDistribution *source,
                                          const double *utilities,
                                          size_t rows,
                                          size_t cols,
                                          const uint8_t *mask,
                                          struct IpRateUtilityProblem **out);

/**
 * # Safety
 * `handle` must come from `ip_rate_utility_problem_new` and not be freed twice.
 */
void ip_rate_utility_problem_free(struct IpRateUtilityProblem *handle);

/**
 * Self-consistent solution at multiplier `beta`. Zero `tol` or `max_iter`
 * selects the default.
 *
 * # Safety
 * `problem` must be a live problem; `out` must be writable.
 */
enum IpStatus ip_rate_utility_solve(const struct IpRateUtilityProblem *problem,
                                    double beta,
                                    double tol,
                                    size_t max_iter,
                                    struct IpRateUtilityPoint **out);

/**
 * Point on the curve at mutual information `rate`.
 *
 * # Safety
 * `problem` must be a live problem; `out` must be writable.
 */
enum IpStatus ip_rate_utility_solve_for_rate(const struct IpRateUtilityProblem *problem,
                                             double rate,
                                             double tol,
                                             size_t max_iter,
                                             struct IpRateUtilityPoint **out);

/**
 * # Safety
 * `handle` must come from a solve call and not be freed twice.
 */
void ip_rate_utility_point_free(struct IpRateUtilityPoint *handle);

/**
 * # Safety
 * `point` must be a live point; `out` must be writable.
 */
enum IpStatus ip_rate_utility_point_summary(const struct IpRateUtilityPoint *point,
                                            struct IpPointSummary *out);

/**
 * Row-major policy kernel of the point.
 *
 * # Safety
 * `point` must be a live point; `out` must hold `capacity` doubles.
 */
enum IpStatus ip_rate_utility_point_kernel(const struct IpRateUtilityPoint *point,
                                           double *out,
                                           size_t capacity);

/**
 * Action marginal `K_* P` of the point.
 *
 * # Safety
 * `point` must be a live point; `out` must hold `capacity` doubles.
 */
enum IpStatus ip_rate_utility_point_marginal(const struct IpRateUtilityPoint *point,
                                             double *out,
                                             size_t capacity);

/**
 * Maximises the proportionality objective over the face spanned by `face`
 * with a linear disutility. `vertex` receives the winning outcome index,
 * or -1 when the net-benefit constraint fails (no lawful restriction).
 * `beta` may be `INFINITY`.
 *
 * # Safety
 * `prior` must be a live distribution; `face` and `utilities` must hold
 * `face_len` entries; `vertex` must be writable, `objective` may be null.
 */
enum IpStatus ip_proportionality_optimize(const struct IpDistribution *prior,
                                          const size_t *face,
                                          size_t face_len,
                                          const double *utilities,
                                          double beta,
                                          double d_max,
                                          int64_t *vertex,
                                          double *objective);

/**
 * Smallest `β` at which some face vertex meets the net-benefit constraint
 * under a linear disutility; NaN when none ever does.
 *
 * # Safety
 * As for [`ip_proportionality_optimize`]; `out` must be writable.
 */
enum IpStatus ip_feasibility_onset(const struct IpDistribution *prior,
                                   const size_t *face,
                                   size_t face_len,
                                   const double *utilities,
                                   double d_max,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFOPOLICY_H */
