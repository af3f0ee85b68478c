#ifndef MMFUSE_H
#define MMFUSE_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum MmfStatus {
  MMF_STATUS_OK = 0,
  MMF_STATUS_NULL_POINTER = 1,
  MMF_STATUS_INVALID_ARGUMENT = 2,
  MMF_STATUS_DIMENSION = 3,
  MMF_STATUS_NON_FINITE = 4,
  MMF_STATUS_NO_POSITIVES = 5,
  MMF_STATUS_IO = 6,
  MMF_STATUS_PARSE = 7,
  MMF_STATUS_AUDIO = 8,
  MMF_STATUS_PANIC = 99,
} MmfStatus;

// Which aggregate [`mmf_map`] computes.
typedef enum MmfAverage {
  // Mean of per-class AP over classes with a positive.
  MMF_AVERAGE_MACRO = 0,
  // AP of all (sample, class) pairs pooled.
  MMF_AVERAGE_MICRO = 1,
  // Mean of per-sample AP over samples with a positive.
  MMF_AVERAGE_SAMPLE = 2,
} MmfAverage;

// Opaque trained sequence encoder.
typedef struct MmfEncoder MmfEncoder;

// Opaque fusion model.
typedef struct MmfFusion MmfFusion;

// Opaque tensor.
typedef struct MmfTensor MmfTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library on the same thread.
const char *mmf_last_error(void);

// Library version as a static NUL-terminated string.
const char *mmf_version(void);

// Copies `data` (product of `shape` values) into a new tensor.
//
// # Safety
// `shape` must point to `rank` values and `data` to their product.
enum MmfStatus mmf_tensor_new(const size_t *shape,
                              size_t rank,
                              const double *data,
                              struct MmfTensor **out);

// # Safety
// `t` must be NULL or a handle from this library, not yet freed.
void mmf_tensor_free(struct MmfTensor *t);

// # Safety
// `t` must be a live tensor handle.
size_t mmf_tensor_rank(const struct MmfTensor *t);

// # Safety
// `t` must be a live tensor handle.
size_t mmf_tensor_numel(const struct MmfTensor *t);

// Writes the shape into `out` (capacity `cap`).
//
// # Safety
// `t` must be a live tensor handle and `out` must hold `cap` values.
enum MmfStatus mmf_tensor_shape(const struct MmfTensor *t, size_t *out, size_t cap);

// Borrowed pointer to the tensor values; valid while the handle lives.
//
// # Safety
// `t` must be a live tensor handle.
const double *mmf_tensor_data(const struct MmfTensor *t);

// Average precision of one class. `labels` holds 0/1 bytes.
//
// # Safety
// `scores` and `labels` must each point to `n` values.
enum MmfStatus mmf_average_precision(const double *scores,
                                     const uint8_t *labels,
                                     size_t n,
                                     double *out);

// Aggregate average precision of `[N x K]` scores against 0/1 labels.
//
// # Safety
// `scores` and `labels` must be live tensor handles.
enum MmfStatus mmf_map(const struct MmfTensor *scores,
                       const struct MmfTensor *labels,
                       enum MmfAverage average,
                       double *out);

// Four-clip log-mel spectrogram `[4 x 128 x T]` of mono samples.
//
// # Safety
// `samples` must point to `n` values.
enum MmfStatus mmf_spectrogram(const float *samples,
                               size_t n,
                               uint32_t sample_rate,
                               uint64_t seed,
                               struct MmfTensor **out);

// Same as [`mmf_spectrogram`] for a WAV file.
//
// # Safety
// `path` must be a NUL-terminated string.
enum MmfStatus mmf_spectrogram_wav(const char *path, uint64_t seed, struct MmfTensor **out);

// Loads an encoder saved by `mmfuse train` (`model.json`).
//
// # Safety
// `path` must be a NUL-terminated string.
enum MmfStatus mmf_encoder_load(const char *path, struct MmfEncoder **out);

// # Safety
// `e` must be NULL or a live encoder handle.
void mmf_encoder_free(struct MmfEncoder *e);

// # Safety
// `e` must be a live encoder handle.
size_t mmf_encoder_num_classes(const struct MmfEncoder *e);

// Logits of one `[T x D]` feature sequence, written to `out` (capacity `cap`).
//
// # Safety
// `e` and `x` must be live handles; `out` must hold `cap` values.
enum MmfStatus mmf_encoder_logits(const struct MmfEncoder *e,
                                  const struct MmfTensor *x,
                                  double *out,
                                  size_t cap);

// Loads a fusion model saved by `mmfuse fuse` (`fusion.json`).
//
// # Safety
// `path` must be a NUL-terminated string.
enum MmfStatus mmf_fusion_load(const char *path, struct MmfFusion **out);

// Fusion model with explicit raw weights `[K x M]`; modalities are named
// `m0..`, classes `c0..`.
//
// # Safety
// `weights` must be a live tensor handle.
enum MmfStatus mmf_fusion_from_weights(const struct MmfTensor *weights, struct MmfFusion **out);

// # Safety
// `f` must be NULL or a live fusion handle.
void mmf_fusion_free(struct MmfFusion *f);

// # Safety
// `f` must be a live fusion handle.
size_t mmf_fusion_num_classes(const struct MmfFusion *f);

// # Safety
// `f` must be a live fusion handle.
size_t mmf_fusion_num_modalities(const struct MmfFusion *f);

// Attention weights `[K x M]`; each row sums to one.
//
// # Safety
// `f` must be a live fusion handle.
enum MmfStatus mmf_fusion_alpha(const struct MmfFusion *f, struct MmfTensor **out);

// Fuses `n` score matrices `[B x K]`, given in the model's modality order.
//
// # Safety
// `f` must be a live fusion handle and `scores` must point to `n` live
// tensor handles.
enum MmfStatus mmf_fusion_fuse(const struct MmfFusion *f,
                               const struct MmfTensor *const *scores,
                               size_t n,
                               struct MmfTensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMFUSE_H */
