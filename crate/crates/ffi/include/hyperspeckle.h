#ifndef HYPERSPECKLE_H
#define HYPERSPECKLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_DIMENSION = 3,
  HS_STATUS_FORMAT = 4,
  HS_STATUS_PRECONDITION = 5,
  HS_STATUS_OUT_OF_RANGE = 6,
  HS_STATUS_NUMERIC = 7,
  HS_STATUS_DEGENERATE_CHANNEL = 8,
  HS_STATUS_UNDEFINED_CORRELATION = 9,
  HS_STATUS_CONFIG = 10,
  HS_STATUS_IO = 11,
  HS_STATUS_BUFFER_TOO_SMALL = 12,
  HS_STATUS_PANIC = 13,
} HsStatus;

// Factored truncated pseudoinverse of a TM.
typedef struct HsSolver HsSolver;

// Dense n-dimensional array of doubles, row-major.
typedef struct HsTensor HsTensor;

// Calibrated transmission matrix.
typedef struct HsTransmissionMatrix HsTransmissionMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hs_version(void);

// Copies the last error message of this thread into `buf` (truncated and
// always NUL-terminated when `cap > 0`). Returns the full message length
// excluding the terminator, or 0 when the last call succeeded.
size_t hs_last_error_message(char *buf, size_t cap);

enum HsStatus hs_tensor_new(const size_t *dims,
                            size_t ndim,
                            const double *data,
                            size_t len,
                            struct HsTensor **out_tensor);

// Reads an HTM1 file.
enum HsStatus hs_tensor_read(const char *path, struct HsTensor **out_tensor);

enum HsStatus hs_tensor_write(const struct HsTensor *t, const char *path);

// Number of dimensions; 0 for a null handle.
size_t hs_tensor_ndim(const struct HsTensor *t);

// Number of elements; 0 for a null handle.
size_t hs_tensor_len(const struct HsTensor *t);

// Copies the dimensions into `dims` (capacity `cap`).
enum HsStatus hs_tensor_dims(const struct HsTensor *t, size_t *dims, size_t cap);

// Borrowed pointer to the elements, valid until the tensor is freed.
const double *hs_tensor_data(const struct HsTensor *t);

void hs_tensor_free(struct HsTensor *t);

// Reads `path` (HTM1) and its JSON sidecar at the same path with a `.json`
// extension.
enum HsStatus hs_tm_read(const char *path, struct HsTransmissionMatrix **out_tm);

size_t hs_tm_n_pixels(const struct HsTransmissionMatrix *tm);

size_t hs_tm_n_columns(const struct HsTransmissionMatrix *tm);

// Image dimensions of the TM's pixel axis.
enum HsStatus hs_tm_image_dims(const struct HsTransmissionMatrix *tm,
                               size_t *width,
                               size_t *height);

void hs_tm_free(struct HsTransmissionMatrix *tm);

// Factors `tm`, dropping the `drop_smallest` smallest singular values and
// any below `rel_floor` times the largest.
enum HsStatus hs_solver_new(const struct HsTransmissionMatrix *tm,
                            size_t drop_smallest,
                            double rel_floor,
                            struct HsSolver **out_solver);

size_t hs_solver_rank(const struct HsSolver *s);

// Ratio of the largest to the smallest retained singular value.
double hs_solver_condition(const struct HsSolver *s);

// Recovers the clamped spectrum of one speckle frame into `spectrum`
// (capacity `cap`, at least the TM column count).
enum HsStatus hs_solver_recover(const struct HsSolver *s,
                                const double *speckle,
                                size_t width,
                                size_t height,
                                double *spectrum,
                                size_t cap);

// Nonnegative L1-regularized refinement starting from `init`; `init` and
// `spectrum` hold the TM column count.
enum HsStatus hs_solver_l1_refine(const struct HsSolver *s,
                                  const double *speckle,
                                  size_t width,
                                  size_t height,
                                  const double *init,
                                  double gamma1,
                                  size_t max_iters,
                                  double *spectrum,
                                  size_t cap);

void hs_solver_free(struct HsSolver *s);

// Wiener deconvolution of a `sw x sh` speckle by a `pw x ph` PSF (no larger
// than the speckle). Writes `sw * sh` samples to `out_image`.
enum HsStatus hs_wiener_deconv(const double *speckle,
                               size_t sw,
                               size_t sh,
                               const double *psf,
                               size_t pw,
                               size_t ph,
                               double nsr,
                               double *out_image);

// SSIM of `a` against the reference `b`.
enum HsStatus hs_ssim(const double *a,
                      const double *b,
                      size_t width,
                      size_t height,
                      double *out_value);

// PSNR in dB of `a` against the reference `b`; identical images give
// positive infinity.
enum HsStatus hs_psnr(const double *a,
                      const double *b,
                      size_t width,
                      size_t height,
                      double *out_value);

// Pearson correlation of two equal-length vectors.
enum HsStatus hs_correlation(const double *a, const double *b, size_t len, double *out_value);

// Simulates and reconstructs the scenario described by `config_json` (or,
// when it is null, the built-in scenario `scenario`), writing every
// artifact under `out_dir`. The mean spectral correlation is stored in
// `out_correlation` when that pointer is non-null (NaN when undefined).
enum HsStatus hs_pipeline_run(const char *config_json,
                              const char *scenario,
                              const char *out_dir,
                              double *out_correlation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERSPECKLE_H */
