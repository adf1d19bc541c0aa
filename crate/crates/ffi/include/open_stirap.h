#ifndef OPEN_STIRAP_H
#define OPEN_STIRAP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// No loss.
#define OS_CASE_CLOSED 0

// Dephasing of the two ground levels, `L = |1><1| - |3><3|`.
#define OS_CASE_DEPHASING 1

// Independent decay of the excited level into each ground level.
#define OS_CASE_EMISSION 2

// Decay into a coherent superposition, `L = |1><2| + |3><2|`.
#define OS_CASE_COHERENT_EMISSION 3

// Bloch vector length of the three-level system.
#define OS_BLOCH_LEN 8

typedef enum {
  OS_STATUS_OK = 0,
  OS_STATUS_NULL_POINTER = 1,
  OS_STATUS_INVALID_ARGUMENT = 2,
  OS_STATUS_BUFFER_TOO_SMALL = 3,
  // Eigen-solver failure, ill-conditioning or secular growth.
  OS_STATUS_NUMERICAL = 4,
  // Integrator step-size underflow (stiff problem).
  OS_STATUS_STIFF = 5,
  // Unexpected internal failure; the message carries details.
  OS_STATUS_INTERNAL = 6,
} OsStatus;

// Affine Bloch generator `dR/dt = M R + b` at fixed parameters.
typedef struct OsGenerator OsGenerator;

// Eigendecomposition of a generator matrix.
typedef struct OsSpectrum OsSpectrum;

// Sampled Bloch trajectory with observables.
typedef struct OsTrajectory OsTrajectory;

// Gaussian pulse pair and integration settings for a single run.
typedef struct {
  // One of the `OS_CASE_*` constants.
  uint32_t loss_case;
  double gamma;
  double g0;
  double a;
  double tau;
  double sigma;
  double delta;
  double t0;
  double t1;
  double rel_tol;
  double abs_tol;
  // Number of output samples, end points included.
  size_t samples;
} OsStirapParams;

typedef struct {
  double p1;
  double p2;
  double p3;
  // `p1 - p3`.
  double z;
  double purity;
} OsObservables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *os_version(void);

// Message of the last failure on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *os_last_error_message(void);

// Forgets the last error message.
void os_clear_last_error(void);

// Static description of a status code.
const char *os_status_name(OsStatus status);

// Default parameters: closed system, `g0 = 1`, `a = 1`, `tau = sigma = 10`,
// `t` in `[-100, 100]`, 1001 samples.
OsStirapParams os_stirap_params_default(void);

// Generator at constant couplings.
//
// # Safety
// `out` must be a valid pointer; on success it receives a handle to be
// released with `os_generator_free`.
OsStatus os_generator_new_constant(uint32_t loss,
                                   double gamma,
                                   double g1,
                                   double g2,
                                   double delta,
                                   OsGenerator **out);

// Generator of the pulse schedule in `params` at time `t`.
//
// # Safety
// `params` and `out` must be valid pointers.
OsStatus os_generator_new_at(const OsStirapParams *params, double t, OsGenerator **out);

// # Safety
// `gen` must come from an `os_generator_new_*` call and not be used
// afterwards. Null is ignored.
void os_generator_free(OsGenerator *gen);

// Bloch vector length `n`; `M` is `n x n`.
//
// # Safety
// `gen` must be a live handle or null (returns 0).
size_t os_generator_len(const OsGenerator *gen);

// Copies `M` (row-major, `n * n` values) and `b` (`n` values).
//
// # Safety
// `gen` must be a live handle; `m` and `b` valid for `m_cap` and `b_cap`
// writes.
OsStatus os_generator_copy(const OsGenerator *gen,
                           double *m,
                           size_t m_cap,
                           double *b,
                           size_t b_cap);

// Stationary Bloch vector `-M^{-1} b`. When `M` is singular the
// particular least-squares solution is written and `*unique` is set to 0.
//
// # Safety
// `gen` must be a live handle; `r` valid for `cap` writes; `unique` valid.
OsStatus os_generator_steady_state(const OsGenerator *gen, double *r, size_t cap, int32_t *unique);

// Eigendecomposition of the generator matrix.
//
// # Safety
// `gen` must be a live handle and `out` valid; release the result with
// `os_spectrum_free`.
OsStatus os_spectrum_new(const OsGenerator *gen, OsSpectrum **out);

// # Safety
// `spec` must come from `os_spectrum_new` and not be used afterwards.
// Null is ignored.
void os_spectrum_free(OsSpectrum *spec);

// Number of eigenvalues.
//
// # Safety
// `spec` must be a live handle or null (returns 0).
size_t os_spectrum_len(const OsSpectrum *spec);

// Real and imaginary parts of the eigenvalues, sorted by decreasing real
// part, together with per-eigenvalue condition numbers. `cond` may be
// null.
//
// # Safety
// `spec` must be a live handle; `re`, `im` (and `cond` if non-null) valid
// for `cap` writes.
OsStatus os_spectrum_eigenvalues(const OsSpectrum *spec,
                                 double *re,
                                 double *im,
                                 double *cond,
                                 size_t cap);

// Liouvillian gap: smallest decay rate among the non-zero modes.
//
// # Safety
// `spec` and `gap` must be valid pointers.
OsStatus os_spectrum_gap(const OsSpectrum *spec, double *gap);

// Integrates the pulse-driven dynamics from level 1.
//
// # Safety
// `params` and `out` must be valid; release the result with
// `os_trajectory_free`.
OsStatus os_evolve_stirap(const OsStirapParams *params, OsTrajectory **out);

// Final target population of the pulse-driven dynamics.
//
// # Safety
// `params` and `p3` must be valid pointers.
OsStatus os_final_population(const OsStirapParams *params, double *p3);

// # Safety
// `traj` must come from `os_evolve_stirap` and not be used afterwards.
// Null is ignored.
void os_trajectory_free(OsTrajectory *traj);

// Number of samples.
//
// # Safety
// `traj` must be a live handle or null (returns 0).
size_t os_trajectory_len(const OsTrajectory *traj);

// Sample times.
//
// # Safety
// `traj` must be a live handle and `times` valid for `cap` writes.
OsStatus os_trajectory_times(const OsTrajectory *traj, double *times, size_t cap);

// Bloch vector at sample `index`.
//
// # Safety
// `traj` must be a live handle and `r` valid for `cap` writes.
OsStatus os_trajectory_state(const OsTrajectory *traj, size_t index, double *r, size_t cap);

// Populations, imbalance and purity at sample `index`.
//
// # Safety
// `traj` and `out` must be valid pointers.
OsStatus os_trajectory_observables(const OsTrajectory *traj, size_t index, OsObservables *out);

// Largest purity and smallest density-matrix eigenvalue over all samples.
//
// # Safety
// All pointers must be valid.
OsStatus os_trajectory_check(const OsTrajectory *traj, double *max_purity, double *min_eigenvalue);

// Dark-state Bloch vector at mixing angle `theta`.
//
// # Safety
// `r` must be valid for `cap` writes.
OsStatus os_dark_bloch(double theta, double *r, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPEN_STIRAP_H */
