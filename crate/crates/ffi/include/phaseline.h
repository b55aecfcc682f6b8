#ifndef PHASELINE_H
#define PHASELINE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Output head of a phase-difference network.
typedef enum PhlHead {
  PHL_HEAD_BPD = 0,
  PHL_HEAD_FPD = 1,
} PhlHead;

// Result code of every fallible entry point.
typedef enum PhlStatus {
  PHL_STATUS_OK = 0,
  PHL_STATUS_NULL_POINTER = 1,
  PHL_STATUS_INVALID_ARGUMENT = 2,
  PHL_STATUS_DIMENSION_MISMATCH = 3,
  PHL_STATUS_NOT_POSITIVE_DEFINITE = 4,
  PHL_STATUS_FORMAT = 5,
  PHL_STATUS_IO = 6,
  PHL_STATUS_MODEL = 7,
  PHL_STATUS_PANIC = 8,
} PhlStatus;

// Streaming network-based phase-difference estimator.
typedef struct PhlDnn PhlDnn;

// A loaded phase-difference network.
typedef struct PhlModel PhlModel;

// Streaming real-time phase-gradient heap integrator.
typedef struct PhlRtpghi PhlRtpghi;

// Streaming weighted least-squares reconstructor.
typedef struct PhlWls PhlWls;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *phl_version(void);

// Message of the last failed call on this thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *phl_last_error(void);

// Creates a least-squares reconstructor with compression exponent `p` and
// frequency weight `gamma0`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum PhlStatus phl_wls_new(double p, double gamma0, struct PhlWls **out);

// Reconstructs the phase of the next frame.
//
// `mag` and `phase_out` hold `bins` values, `fpd` holds `bins - 1`. `tpd`
// holds `bins` values and may be NULL only for the first frame.
//
// # Safety
// Every non-null pointer must be valid for the stated number of values.
enum PhlStatus phl_wls_push(struct PhlWls *handle,
                            const double *mag,
                            size_t bins,
                            const double *tpd,
                            const double *fpd,
                            size_t fpd_len,
                            double *phase_out,
                            size_t phase_len);

// Releases a reconstructor. NULL is ignored.
//
// # Safety
// `handle` must come from [`phl_wls_new`] and not be used afterwards.
void phl_wls_free(struct PhlWls *handle);

// Creates a real-time heap integrator for a Hann window.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum PhlStatus phl_rtpghi_new(size_t window_length,
                              size_t hop,
                              size_t fft_size,
                              double tolerance,
                              uint64_t seed,
                              struct PhlRtpghi **out);

// Reconstructs the phase of the next frame from its magnitude alone.
// `mag` and `phase_out` hold `fft_size / 2 + 1` values.
//
// # Safety
// Pointers must be valid for the stated number of values.
enum PhlStatus phl_rtpghi_push(struct PhlRtpghi *handle,
                               const double *mag,
                               size_t bins,
                               double *phase_out,
                               size_t phase_len);

// Releases an integrator. NULL is ignored.
//
// # Safety
// `handle` must come from [`phl_rtpghi_new`] and not be used afterwards.
void phl_rtpghi_free(struct PhlRtpghi *handle);

// Decodes a PDNW model from memory.
//
// # Safety
// `bytes` must be valid for `len` bytes; `out` must be writable.
enum PhlStatus phl_model_from_bytes(const uint8_t *bytes, size_t len, struct PhlModel **out);

// Loads a PDNW model from a file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PhlStatus phl_model_load(const char *path, struct PhlModel **out);

// Writes the head of `model` to `head`.
//
// # Safety
// Both pointers must be valid.
enum PhlStatus phl_model_head(const struct PhlModel *model, enum PhlHead *head);

// Writes the number of learned parameters of `model` to `count`.
//
// # Safety
// Both pointers must be valid.
enum PhlStatus phl_model_param_count(const struct PhlModel *model, size_t *count);

// Releases a model. Estimators created from it stay valid.
//
// # Safety
// `model` must come from a `phl_model_*` constructor and not be used afterwards.
void phl_model_free(struct PhlModel *model);

// Creates a streaming estimator from a BPD and an FPD model.
//
// # Safety
// Model pointers must be valid handles; `out` must be writable.
enum PhlStatus phl_dnn_new(const struct PhlModel *bpd,
                           const struct PhlModel *fpd,
                           size_t hop,
                           size_t fft_size,
                           struct PhlDnn **out);

// Estimates the phase differences of the next frame.
//
// `mag` and `tpd_out` hold `bins` values, `fpd_out` holds `bins - 1`.
// `has_tpd` is set to false on the first frame, where `tpd_out` is left
// untouched.
//
// # Safety
// Pointers must be valid for the stated number of values.
enum PhlStatus phl_dnn_push(struct PhlDnn *handle,
                            const double *mag,
                            size_t bins,
                            double *tpd_out,
                            size_t tpd_len,
                            double *fpd_out,
                            size_t fpd_len,
                            bool *has_tpd);

// Releases an estimator. NULL is ignored.
//
// # Safety
// `handle` must come from [`phl_dnn_new`] and not be used afterwards.
void phl_dnn_free(struct PhlDnn *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASELINE_H */
