#ifndef GRIDFORGE_H
#define GRIDFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes. The nonzero values match the CLI exit codes.
 */
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  /*
   I/O or other failure.
   */
  GF_STATUS_FAILURE = 1,
  /*
   Bad argument or config, including null pointers.
   */
  GF_STATUS_INVALID_ARGUMENT = 2,
  /*
   Truncation leakage, Kraus tail or convergence failure.
   */
  GF_STATUS_TRUNCATION = 3,
  /*
   Numerical failure (conditioning, matrix functions).
   */
  GF_STATUS_NUMERICAL = 4,
  /*
   A Rust panic was caught at the boundary.
   */
  GF_STATUS_PANIC = 5,
} GfStatus;

/*
 Family selector for `gf_code_new`.
 */
typedef enum GfFamily {
  GF_FAMILY_PHASED_COMB = 0,
  GF_FAMILY_COMB = 1,
  GF_FAMILY_GAUSSIAN_GKP = 2,
  GF_FAMILY_TRIVIAL = 3,
} GfFamily;

/*
 A pair of logical codewords.
 */
typedef struct GfCode GfCode;

/*
 A Fock-space state vector.
 */
typedef struct GfState GfState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *gf_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *gf_last_error(void);

/*
 Runs the generation protocol. `n_max = 0` picks the size automatically.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum GfStatus gf_generate(uint8_t mu,
                          size_t cycles,
                          double r_db,
                          bool correction,
                          size_t n_max,
                          struct GfState **out);

/*
 # Safety
 `state` must come from this library and not be used afterwards; null is a
 no-op.
 */
void gf_state_free(struct GfState *state);

/*
 Number of Fock amplitudes (n_max + 1), or 0 for a null handle.

 # Safety
 `state` must be null or a live handle.
 */
size_t gf_state_len(const struct GfState *state);

/*
 Copies the amplitudes into `re` and `im`, each of length `len`, which must
 equal `gf_state_len`.

 # Safety
 `state` must be a live handle; `re` and `im` must point to `len` writable
 doubles.
 */
enum GfStatus gf_state_amplitudes(const struct GfState *state, double *re, double *im, size_t len);

/*
 <Q_mu> of the state in dB.

 # Safety
 `state` must be a live handle and `out` writable.
 */
enum GfStatus gf_state_q_db(const struct GfState *state, uint8_t mu, double *out);

/*
 Fidelity to the equal-leg comb reached after `cycles` cycles.

 # Safety
 `state` must be a live handle and `out` writable.
 */
enum GfStatus gf_state_comb_fidelity(const struct GfState *state,
                                     uint8_t mu,
                                     size_t cycles,
                                     double r_db,
                                     double *out);

/*
 Builds a codeword pair at a fixed basis size `n_max`.

 # Safety
 `out` must be writable.
 */
enum GfStatus gf_code_new(enum GfFamily family,
                          size_t cycles,
                          double r_db,
                          size_t n_max,
                          struct GfCode **out);

/*
 # Safety
 `code` must come from this library and not be used afterwards; null is a
 no-op.
 */
void gf_code_free(struct GfCode *code);

/*
 Near-optimal channel fidelity under loss `gamma`. `ell = 0` selects the
 Kraus count automatically; the count used is written to `ell_used` when
 it is not null.

 # Safety
 `code` must be a live handle, `f_e` writable, `ell_used` null or writable.
 */
enum GfStatus gf_code_channel_fidelity(const struct GfCode *code,
                                       double gamma,
                                       size_t ell,
                                       double *f_e,
                                       size_t *ell_used);

/*
 Channel fidelity with the basis size escalated until converged; the final
 size goes to `n_r_used` when it is not null.

 # Safety
 `f_e` must be writable, `n_r_used` null or writable.
 */
enum GfStatus gf_qec_point(enum GfFamily family,
                           size_t cycles,
                           double r_db,
                           double gamma,
                           double *f_e,
                           size_t *n_r_used);

/*
 Runs a CLI command ("generate", "sweep-q", "noise", "qec", "hadamard",
 "wigner") with a key-value or JSON config; files go to its output_dir.

 # Safety
 Both arguments must be NUL-terminated strings.
 */
enum GfStatus gf_run(const char *command, const char *config);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDFORGE_H */
