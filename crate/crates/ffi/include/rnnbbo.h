#ifndef RNNBBO_H
#define RNNBBO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RbStatus {
  RB_STATUS_OK = 0,
  RB_STATUS_NULL_POINTER = 1,
  RB_STATUS_INVALID_ARGUMENT = 2,
  RB_STATUS_IO = 3,
  RB_STATUS_PARSE = 4,
  RB_STATUS_UNKNOWN_TICKET = 5,
  RB_STATUS_NON_FINITE = 6,
  RB_STATUS_PANIC = 7,
} RbStatus;

/**
 * A loaded policy checkpoint.
 */
typedef struct RbPolicy RbPolicy;

/**
 * An ask/tell optimization session driven by a policy.
 */
typedef struct RbSession RbSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *rb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rb_version(void);

/**
 * Loads a checkpoint file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RbStatus rb_policy_load(const char *path, struct RbPolicy **out);

/**
 * Input dimension of the policy, or 0 for NULL.
 *
 * # Safety
 * `policy` must be NULL or a handle from [`rb_policy_load`].
 */
size_t rb_policy_dim(const struct RbPolicy *policy);

/**
 * Releases a policy. NULL is ignored.
 *
 * # Safety
 * `policy` must be NULL or an unreleased handle from [`rb_policy_load`].
 */
void rb_policy_free(struct RbPolicy *policy);

/**
 * Starts a session. `lower` and `upper` give the box (both NULL selects the
 * checkpoint's own box); observations are fed to the policy as
 * `(y - shift) / scale`.
 *
 * # Safety
 * `policy` must be a live handle; `lower`/`upper` NULL or pointing to
 * `dim` doubles; `out` valid.
 */
enum RbStatus rb_session_new(const struct RbPolicy *policy,
                             const double *lower,
                             const double *upper,
                             size_t dim,
                             double shift,
                             double scale,
                             struct RbSession **out);

/**
 * Proposes the next point, writing `dim` coordinates to `x` and its ticket
 * to `*ticket`.
 *
 * # Safety
 * `session` must be live; `x` must hold `dim` doubles; `ticket` valid.
 */
enum RbStatus rb_session_ask(struct RbSession *session, double *x, size_t dim, uint64_t *ticket);

/**
 * Reports the objective value for an earlier proposal.
 *
 * # Safety
 * `session` must be live.
 */
enum RbStatus rb_session_tell(struct RbSession *session, uint64_t ticket, double y);

/**
 * Releases a session. NULL is ignored.
 *
 * # Safety
 * `session` must be NULL or an unreleased handle from [`rb_session_new`].
 */
void rb_session_free(struct RbSession *session);

/**
 * Evaluates an unperturbed benchmark (`"branin"`, `"goldstein_price"`,
 * `"hartmann3"`, `"hartmann6"`) at a unit-cube point.
 *
 * # Safety
 * `name` NUL-terminated; `x` holds `dim` doubles; `out` valid.
 */
enum RbStatus rb_benchmark_eval(const char *name, const double *x, size_t dim, double *out);

/**
 * Expected improvement below `best` of a Gaussian with the given mean and
 * variance. Returns NaN for non-finite input or negative variance.
 */
double rb_expected_improvement(double mean, double variance, double best);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RNNBBO_H */
