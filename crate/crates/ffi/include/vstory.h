#ifndef VSTORY_H
#define VSTORY_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. `VS_STATUS_OK` is zero.
 */
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_INPUT = 2,
  VS_STATUS_NUMERIC = 3,
  VS_STATUS_ILL_POSED = 4,
  VS_STATUS_FORMAT = 5,
  VS_STATUS_IO = 6,
  VS_STATUS_BUFFER_TOO_SMALL = 7,
  VS_STATUS_PANIC = 8,
} VsStatus;

/*
 Two trained streams and their fusion weight.
 */
typedef struct VsModel VsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *vs_version(void);

/*
 Message of the last failed call on this thread, or NULL after a success.
 Valid until the next call into the library from the same thread.
 */
const char *vs_last_error_message(void);

/*
 Length of the motion feature for `bins` and a `pyramid` x `pyramid` grid.
 */
size_t vs_motion_dim(size_t bins, size_t pyramid);

/*
 Magnitude-weighted orientation histogram of one flow frame into `out[bins]`.

 # Safety
 `uv` must hold `width * height * 2` values and `out` `out_len` values.
 */
enum VsStatus vs_hoof(const double *uv,
                      size_t width,
                      size_t height,
                      size_t bins,
                      double *out,
                      size_t out_len);

/*
 Pyramid HOOF of one frame into `out[vs_motion_dim(bins, pyramid)]`.

 # Safety
 As for [`vs_hoof`].
 */
enum VsStatus vs_spp_hoof_frame(const double *uv,
                                size_t width,
                                size_t height,
                                size_t bins,
                                size_t pyramid,
                                double *out,
                                size_t out_len);

/*
 Clip motion feature: the mean pyramid HOOF over `frame_count` frames.

 # Safety
 `uv` must hold `frame_count * width * height * 2` values.
 */
enum VsStatus vs_clip_motion_feature(const double *uv,
                                     size_t width,
                                     size_t height,
                                     size_t frame_count,
                                     size_t bins,
                                     size_t pyramid,
                                     double *out,
                                     size_t out_len);

/*
 Mean flow magnitude over every pixel of every frame.

 # Safety
 `uv` as for [`vs_clip_motion_feature`]; `out` points to one double.
 */
enum VsStatus vs_dynamics_score(const double *uv,
                                size_t width,
                                size_t height,
                                size_t frame_count,
                                double *out);

/*
 Loads a model from two checkpoint files. Release it with [`vs_model_free`].

 # Safety
 Paths must be NUL-terminated; `out` must be a valid pointer.
 */
enum VsStatus vs_model_load(const char *semantic_path,
                            const char *motion_path,
                            double lambda,
                            struct VsModel **out);

/*
 Releases a model. NULL is ignored.

 # Safety
 `model` must come from [`vs_model_load`] and not be used afterwards.
 */
void vs_model_free(struct VsModel *model);

/*
 Input dimensions of the semantic and motion streams.

 # Safety
 `model` must be live; outputs must be valid pointers.
 */
enum VsStatus vs_model_dims(const struct VsModel *model, size_t *semantic_dim, size_t *motion_dim);

/*
 Two-stream greedy order of `n` clips into `out_order[n]`. `semantic` is
 `n x semantic_dim`, `motion` is `n x motion_dim` (see [`vs_model_dims`]).

 # Safety
 Arrays must have the sizes above.
 */
enum VsStatus vs_greedy_compose(const struct VsModel *model,
                                size_t n,
                                const double *semantic,
                                const double *motion,
                                const double *dynamics,
                                size_t *out_order);

/*
 Coherence matrix along `rnn_order` into `out[n * n]`: row `j` is the
 context ending at clip `j`, column `i` the candidate clip `i`.

 # Safety
 Arrays as for [`vs_greedy_compose`]; `rnn_order` holds `n` indices.
 */
enum VsStatus vs_coherence_matrix(const struct VsModel *model,
                                  size_t n,
                                  const double *semantic,
                                  const double *motion,
                                  const double *dynamics,
                                  const size_t *rnn_order,
                                  double *out);

/*
 Story ranking. `relation[i * n + j]` is `d(v_i, v_j)`, the coherence of
 clip `i` given clip `j` as context. Writes the order to `out_order[n]` and,
 when `out_trajectory` is not NULL, the prefix objective values to
 `out_trajectory[n]`. `lazy` selects cached gain evaluation; both give the
 same order.

 # Safety
 Arrays must have the sizes above.
 */
enum VsStatus vs_rank(const double *relation,
                      const double *dynamics,
                      size_t n,
                      double gamma,
                      bool lazy,
                      size_t *out_order,
                      double *out_trajectory);

/*
 Bradley-Terry scores from `wins[a * n + b]` (times `a` was preferred over
 `b`) into `out_scores[n]`, normalised to sum 1. `out_smoothed` (nullable)
 reports whether pseudo-counts were added.

 # Safety
 Arrays must have the sizes above.
 */
enum VsStatus vs_bradley_terry(const uint64_t *wins,
                               size_t n,
                               double *out_scores,
                               bool *out_smoothed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VSTORY_H */
