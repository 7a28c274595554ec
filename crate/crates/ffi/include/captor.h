#ifndef CAPTOR_H
#define CAPTOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function.
 */
typedef enum CaptorStatus {
  CAPTOR_STATUS_OK = 0,
  CAPTOR_STATUS_NULL_POINTER = 1,
  CAPTOR_STATUS_INVALID_ARGUMENT = 2,
  CAPTOR_STATUS_IO = 3,
  CAPTOR_STATUS_FORMAT = 4,
  CAPTOR_STATUS_CHECKPOINT = 5,
  CAPTOR_STATUS_NUMERIC = 6,
  CAPTOR_STATUS_PANIC = 7,
} CaptorStatus;

/**
 * One image's feature grid.
 */
typedef struct CaptorFeatureGrid CaptorFeatureGrid;

/**
 * A trained caption model loaded from a checkpoint.
 */
typedef struct CaptorModel CaptorModel;

/**
 * Corpus-level caption scores.
 */
typedef struct CaptorScores {
  double bleu1;
  double bleu2;
  double bleu3;
  double bleu4;
  double rouge_l;
  double cider;
  double meteor;
} CaptorScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *captor_version(void);

/**
 * Message for the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next captor call on the same thread.
 */
const char *captor_last_error(void);

/**
 * Loads a model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CaptorStatus captor_model_load(const char *path, struct CaptorModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`captor_model_load`] and not be freed twice.
 */
void captor_model_free(struct CaptorModel *model);

/**
 * Vocabulary size, reserved tokens included.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CaptorStatus captor_model_vocab_size(const struct CaptorModel *model, size_t *out);

/**
 * Reads a SAF1 feature file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CaptorStatus captor_grid_load(const char *path, struct CaptorFeatureGrid **out);

/**
 * Builds a grid from `locations * channels` row-major floats.
 *
 * # Safety
 * `image_id` must be NUL-terminated, `data` must point at
 * `locations * channels` floats and `out` must be writable.
 */
enum CaptorStatus captor_grid_from_data(const char *image_id,
                                        const float *data,
                                        size_t locations,
                                        size_t channels,
                                        struct CaptorFeatureGrid **out);

/**
 * Releases a grid. NULL is ignored.
 *
 * # Safety
 * `grid` must come from a `captor_grid_*` constructor and not be freed twice.
 */
void captor_grid_free(struct CaptorFeatureGrid *grid);

/**
 * Captions one grid. `beam_width` 1 decodes greedily.
 *
 * On success `*out` holds a caption to release with [`captor_string_free`].
 * `log_prob` may be NULL.
 *
 * # Safety
 * `model` and `grid` must be live handles; `out` must be writable.
 */
enum CaptorStatus captor_caption(const struct CaptorModel *model,
                                 const struct CaptorFeatureGrid *grid,
                                 size_t beam_width,
                                 size_t max_len,
                                 char **out,
                                 double *log_prob);

/**
 * Releases a string returned by [`captor_caption`]. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void captor_string_free(char *s);

/**
 * Scores a hypothesis file against a references file, both
 * `image_id<TAB>caption` per line.
 *
 * # Safety
 * Both paths must be NUL-terminated and `out` writable.
 */
enum CaptorStatus captor_score_files(const char *hyp_path,
                                     const char *refs_path,
                                     struct CaptorScores *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPTOR_H */
