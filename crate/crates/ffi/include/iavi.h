#ifndef IAVI_H
#define IAVI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Bumped on any incompatible change to the functions or types below.
 */
#define IAVI_ABI_VERSION 1

typedef enum IaviStatus {
  IAVI_STATUS_OK = 0,
  IAVI_STATUS_NULL_POINTER = 1,
  IAVI_STATUS_INVALID_ARGUMENT = 2,
  IAVI_STATUS_INVALID_MODEL = 3,
  IAVI_STATUS_NON_CONVERGENCE = 4,
  IAVI_STATUS_INFEASIBLE = 5,
  IAVI_STATUS_IO = 6,
  IAVI_STATUS_NUMERICAL = 7,
  IAVI_STATUS_PANIC = 8,
} IaviStatus;

typedef struct IaviMdp IaviMdp;

typedef struct IaviObjectworld IaviObjectworld;

typedef struct IaviPolicy IaviPolicy;

typedef struct IaviResult IaviResult;

typedef struct IaviReward IaviReward;

uint32_t iavi_abi_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *iavi_last_error_message(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum IaviStatus iavi_objectworld_generate(size_t grid_size,
                                          size_t colors,
                                          size_t objects,
                                          double wind,
                                          double gamma,
                                          uint64_t seed,
                                          struct IaviObjectworld **out);

/**
 * Parses an instance previously written by the library as JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` as above.
 */
enum IaviStatus iavi_objectworld_from_json(const char *json, struct IaviObjectworld **out);

/**
 * # Safety
 * `world` must be null or a handle from this library not yet freed.
 */
void iavi_objectworld_free(struct IaviObjectworld *world);

/**
 * # Safety
 * Pointers must be valid; `world` a live handle.
 */
enum IaviStatus iavi_objectworld_n_states(const struct IaviObjectworld *world, size_t *out);

/**
 * Copy of the instance's transition model.
 *
 * # Safety
 * Pointers must be valid; `world` a live handle.
 */
enum IaviStatus iavi_objectworld_mdp(const struct IaviObjectworld *world, struct IaviMdp **out);

/**
 * # Safety
 * Pointers must be valid; `world` a live handle.
 */
enum IaviStatus iavi_objectworld_true_reward(const struct IaviObjectworld *world,
                                             struct IaviReward **out);

/**
 * Boltzmann policy of the optimal Q-function under the true reward.
 *
 * # Safety
 * Pointers must be valid; `world` a live handle.
 */
enum IaviStatus iavi_objectworld_expert(const struct IaviObjectworld *world,
                                        struct IaviPolicy **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum IaviStatus iavi_mdp_from_json(const char *json, struct IaviMdp **out);

/**
 * # Safety
 * `mdp` must be null or a live handle.
 */
void iavi_mdp_free(struct IaviMdp *mdp);

/**
 * # Safety
 * Pointers must be valid; `mdp` a live handle.
 */
enum IaviStatus iavi_mdp_dims(const struct IaviMdp *mdp, size_t *n_states, size_t *n_actions);

/**
 * Policy from `n_states * n_actions` row-major probabilities.
 *
 * # Safety
 * `probs` must point to that many doubles; `out` a valid pointer.
 */
enum IaviStatus iavi_policy_new(size_t n_states,
                                size_t n_actions,
                                const double *probs,
                                struct IaviPolicy **out);

/**
 * Copies the probabilities row-major into `out`, which must hold exactly
 * `n_states * n_actions` doubles.
 *
 * # Safety
 * `out` must point to `len` writable doubles; `policy` a live handle.
 */
enum IaviStatus iavi_policy_copy(const struct IaviPolicy *policy, double *out, size_t len);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
void iavi_policy_free(struct IaviPolicy *policy);

/**
 * Reward table from `n_states * n_actions` row-major values.
 *
 * # Safety
 * `values` must point to that many doubles; `out` a valid pointer.
 */
enum IaviStatus iavi_reward_new(size_t n_states,
                                size_t n_actions,
                                const double *values,
                                struct IaviReward **out);

/**
 * # Safety
 * `out` must point to `len` writable doubles; `reward` a live handle.
 */
enum IaviStatus iavi_reward_copy(const struct IaviReward *reward, double *out, size_t len);

/**
 * # Safety
 * `reward` must be null or a live handle.
 */
void iavi_reward_free(struct IaviReward *reward);

/**
 * Recovers a reward whose optimal Boltzmann policy is `expert`.
 * Non-positive `convergence_tol` or zero `max_sweeps` select the defaults.
 *
 * # Safety
 * Pointers must be valid; `mdp` and `expert` live handles.
 */
enum IaviStatus iavi_solve(const struct IaviMdp *mdp,
                           const struct IaviPolicy *expert,
                           double convergence_tol,
                           size_t max_sweeps,
                           struct IaviResult **out);

/**
 * # Safety
 * Pointers must be valid; `result` a live handle.
 */
enum IaviStatus iavi_result_reward(const struct IaviResult *result, struct IaviReward **out);

/**
 * # Safety
 * Pointers must be valid; `result` a live handle.
 */
enum IaviStatus iavi_result_status(const struct IaviResult *result,
                                   bool *converged,
                                   size_t *sweeps_used);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
void iavi_result_free(struct IaviResult *result);

/**
 * # Safety
 * Pointers must be valid; handles live.
 */
enum IaviStatus iavi_expected_value_difference(const struct IaviMdp *mdp,
                                               const struct IaviReward *true_reward,
                                               const struct IaviReward *learned_reward,
                                               double *out);

/**
 * Minimum-norm reward vector for one state's η values; `eta` and `out`
 * both hold `n` doubles.
 *
 * # Safety
 * `eta` must point to `n` readable and `out` to `n` writable doubles.
 */
enum IaviStatus iavi_solve_state_rewards(const double *eta, size_t n, double *out);

#endif  /* IAVI_H */
