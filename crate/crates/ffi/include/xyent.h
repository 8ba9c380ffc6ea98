#ifndef XYENT_H
#define XYENT_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every function.
 */
typedef enum XyentStatus {
  XYENT_STATUS_OK = 0,
  XYENT_STATUS_NULL_POINTER = 1,
  XYENT_STATUS_INVALID_PARAMETER = 2,
  XYENT_STATUS_NUMERICAL = 3,
  XYENT_STATUS_INCONCLUSIVE = 4,
  XYENT_STATUS_BUFFER_TOO_SMALL = 5,
  XYENT_STATUS_UNPHYSICAL = 6,
  XYENT_STATUS_PANIC = 7,
} XyentStatus;

/**
 * Model parameters: coupling, anisotropy and chain length.
 */
typedef struct XyentModel XyentModel;

/**
 * Real symmetric density matrix of a few qubits.
 */
typedef struct XyentState XyentState;

/**
 * Result of a genuine negativity evaluation.
 */
typedef struct XyentNegativity {
  double value;
  double duality_gap;
  size_t iterations;
  /**
   * 1 when the solver reached its tolerance, 0 otherwise.
   */
  int optimal;
} XyentNegativity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated, into `buf`.
 * Returns the message length in bytes without the terminator; the copy is
 * truncated when `len` is too small. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t xyent_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *xyent_version(void);

/**
 * Creates a model. `length` is an odd chain length ≥ 3, or 0 for the
 * thermodynamic limit.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to free
 * with [`xyent_model_free`].
 */
enum XyentStatus xyent_model_new(double lambda,
                                 double gamma,
                                 size_t length,
                                 struct XyentModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`xyent_model_new`] not yet freed.
 */
void xyent_model_free(struct XyentModel *model);

/**
 * Two-point correlator `G_r`; `tol` is the quadrature tolerance in the
 * thermodynamic limit.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum XyentStatus xyent_correlator(const struct XyentModel *model,
                                  int64_t r,
                                  double tol,
                                  double *out);

/**
 * Ground-state energy per site.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum XyentStatus xyent_energy_density(const struct XyentModel *model, double tol, double *out);

/**
 * Reduced density matrix of sites separated by `spacings[0..count]`.
 *
 * # Safety
 * `model` must be a live handle, `spacings` must point to `count` values and
 * `out` must be valid; free the result with [`xyent_state_free`].
 */
enum XyentStatus xyent_state_from_model(const struct XyentModel *model,
                                        const size_t *spacings,
                                        size_t count,
                                        double tol,
                                        struct XyentState **out);

/**
 * State from a row-major `dim × dim` matrix, `dim` a power of two.
 *
 * # Safety
 * `data` must point to `dim * dim` values and `out` must be valid; free the
 * result with [`xyent_state_free`].
 */
enum XyentStatus xyent_state_from_matrix(const double *data, size_t dim, struct XyentState **out);

/**
 * # Safety
 * `state` must be null or a live handle.
 */
void xyent_state_free(struct XyentState *state);

/**
 * Number of qubits of a state, 0 for a null handle.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t xyent_state_parties(const struct XyentState *state);

/**
 * Copies the matrix row-major into `buf`, which must hold `dim²` values.
 *
 * # Safety
 * `state` must be a live handle and `buf` must point to `len` writable values.
 */
enum XyentStatus xyent_state_matrix(const struct XyentState *state, double *buf, size_t len);

/**
 * Genuine multiparticle negativity with SDP tolerance `tol`.
 *
 * # Safety
 * `state` must be a live handle and `out` a valid pointer.
 */
enum XyentStatus xyent_genuine_negativity(const struct XyentState *state,
                                          double tol,
                                          struct XyentNegativity *out);

/**
 * Four-qubit concurrence of a four-qubit state.
 *
 * # Safety
 * `state` must be a live handle and `out` a valid pointer.
 */
enum XyentStatus xyent_c4(const struct XyentState *state, double *out);

/**
 * Searches for a biseparable decomposition. Returns `Ok` with a checked
 * certificate, `Inconclusive` when none was found. `iterations` may be null.
 *
 * # Safety
 * `state` must be a live handle; `iterations` must be null or valid.
 */
enum XyentStatus xyent_certify_biseparable(const struct XyentState *state,
                                           uint64_t seed,
                                           size_t max_iter,
                                           size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XYENT_H */
