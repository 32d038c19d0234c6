#ifndef CSFG_H
#define CSFG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CSFG_STATUS_OK = 0,
  CSFG_STATUS_NULL_POINTER = 1,
  CSFG_STATUS_INVALID_GRID = 2,
  CSFG_STATUS_INVALID_PARAMS = 3,
  CSFG_STATUS_INVALID_PUMP = 4,
  CSFG_STATUS_ALIASED_PUMP = 5,
  CSFG_STATUS_BIN_OUT_OF_RANGE = 6,
  CSFG_STATUS_NON_ISOMETRIC = 7,
  CSFG_STATUS_NON_ORTHONORMAL_PUMPS = 8,
  CSFG_STATUS_NO_CAVITY_DYNAMICS = 9,
  CSFG_STATUS_NEAR_SINGULAR_PERIODIC_SOLVE = 10,
  CSFG_STATUS_STEP_MISALIGNED = 11,
  CSFG_STATUS_NO_CONVERSION = 12,
  CSFG_STATUS_DIMENSION = 13,
  CSFG_STATUS_ORACLE = 14,
  CSFG_STATUS_IO = 15,
  CSFG_STATUS_PARSE = 16,
  CSFG_STATUS_BUFFER_TOO_SMALL = 17,
  CSFG_STATUS_PANIC = 18,
} CsfgStatus;

/**
 * Opaque frequency grid.
 */
typedef struct CsfgGrid CsfgGrid;

/**
 * Opaque set of orthonormal pump envelopes, one per output channel.
 */
typedef struct CsfgPump CsfgPump;

/**
 * Opaque set of frequency-bin transfer matrices.
 */
typedef struct CsfgTransfer CsfgTransfer;

typedef struct {
  double gamma;
  double eta;
  double iota;
  double window;
} CsfgParams;

typedef struct {
  double fm_fidelity;
  double fm_ce;
  double pc_fidelity;
  double pc_ce;
  double hd_fidelity;
  double hd_ce;
} CsfgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *csfg_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *csfg_version(void);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
CsfgStatus csfg_grid_new(size_t n_bins, size_t oversample, CsfgGrid **out);

/**
 * # Safety
 * `grid` must come from [`csfg_grid_new`] or be null.
 */
void csfg_grid_free(CsfgGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle.
 */
size_t csfg_grid_n_bins(const CsfgGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle.
 */
size_t csfg_grid_n_times(const CsfgGrid *grid);

/**
 * Rates for `γ = r·Δω` at matched coupling `η = √(γT)`, no loss.
 *
 * # Safety
 * `grid` and `out` must be valid pointers.
 */
CsfgStatus csfg_params_matched(const CsfgGrid *grid, double r, CsfgParams *out);

/**
 * Hermite-Gauss pump of the given order; `width` in bins.
 *
 * # Safety
 * `grid` and `out` must be valid pointers.
 */
CsfgStatus csfg_pump_hermite_gauss(const CsfgGrid *grid,
                                   uint32_t order,
                                   double width,
                                   CsfgPump **out);

/**
 * # Safety
 * `grid` and `out` must be valid pointers.
 */
CsfgStatus csfg_pump_single_bin(const CsfgGrid *grid, int64_t bin, CsfgPump **out);

/**
 * Identity gate on the central `channels` bins.
 *
 * # Safety
 * `grid` and `out` must be valid pointers.
 */
CsfgStatus csfg_pump_identity(const CsfgGrid *grid, size_t channels, CsfgPump **out);

/**
 * Pumps realising the `rows × n_bins` isometry `U`, given row-major.
 *
 * # Safety
 * `re` and `im` must each hold `rows * n_bins` doubles.
 */
CsfgStatus csfg_pump_from_unitary(const CsfgGrid *grid,
                                  size_t rows,
                                  const double *re,
                                  const double *im,
                                  CsfgPump **out);

/**
 * # Safety
 * `pump` must come from a `csfg_pump_*` constructor or be null.
 */
void csfg_pump_free(CsfgPump *pump);

/**
 * # Safety
 * `pump` must be a live handle.
 */
size_t csfg_pump_channels(const CsfgPump *pump);

/**
 * Computes the transfer matrices. The idler part costs one extra solve
 * per channel and is skipped unless `with_idler` is nonzero.
 *
 * # Safety
 * `pump`, `params` and `out` must be valid pointers.
 */
CsfgStatus csfg_transfer_compute(const CsfgPump *pump,
                                 const CsfgParams *params,
                                 int32_t with_idler,
                                 CsfgTransfer **out);

/**
 * # Safety
 * `transfer` must come from [`csfg_transfer_compute`] or be null.
 */
void csfg_transfer_free(CsfgTransfer *transfer);

/**
 * Row-isometry residual, or NaN when the idler part was not computed.
 *
 * # Safety
 * `transfer` must be a live handle.
 */
double csfg_transfer_isometry_residual(const CsfgTransfer *transfer);

/**
 * Copies the signal matrix of output channel `k` into `re`/`im`, each of
 * at least `n_bins * n_bins` entries.
 *
 * # Safety
 * `re` and `im` must hold `len` writable doubles.
 */
CsfgStatus csfg_transfer_signal(const CsfgTransfer *transfer,
                                size_t k,
                                double *re,
                                double *im,
                                size_t len);

/**
 * Idler matrix from input channel `j` to output channel `k`.
 *
 * # Safety
 * `re` and `im` must hold `len` writable doubles.
 */
CsfgStatus csfg_transfer_idler(const CsfgTransfer *transfer,
                               size_t k,
                               size_t j,
                               double *re,
                               double *im,
                               size_t len);

/**
 * All six fidelity and conversion-efficiency figures for `pump`.
 *
 * # Safety
 * `pump`, `params` and `out` must be valid pointers.
 */
CsfgStatus csfg_metrics(const CsfgPump *pump, const CsfgParams *params, CsfgMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSFG_H */
