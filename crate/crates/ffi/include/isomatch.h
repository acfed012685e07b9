#ifndef ISOMATCH_H
#define ISOMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum IsomatchStatus {
  ISOMATCH_STATUS_OK = 0,
  ISOMATCH_STATUS_NULL_POINTER = 1,
  ISOMATCH_STATUS_INVALID_ARGUMENT = 2,
  ISOMATCH_STATUS_IO = 3,
  ISOMATCH_STATUS_PARSE = 4,
  ISOMATCH_STATUS_INVALID_MODEL = 5,
  ISOMATCH_STATUS_INTERNAL = 6,
} IsomatchStatus;

/**
 * Learned weights and feature configuration.
 */
typedef struct IsomatchModel IsomatchModel;

/**
 * A point set with image size and optional descriptors.
 */
typedef struct IsomatchScene IsomatchScene;

/**
 * An ordered subset of a scene's points.
 */
typedef struct IsomatchTemplate IsomatchTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *isomatch_version(void);

/**
 * Message for the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *isomatch_last_error(void);

/**
 * Reads a scene file. `width` and `height` give the image size for legacy
 * landmark files without a header; pass 0 otherwise.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IsomatchStatus isomatch_scene_load(const char *path,
                                        double width,
                                        double height,
                                        struct IsomatchScene **out);

/**
 * Builds a scene from `n` interleaved `x, y` coordinates.
 *
 * # Safety
 * `xy` must point to `2 * n` doubles and `out` must be valid.
 */
enum IsomatchStatus isomatch_scene_from_points(const double *xy,
                                               size_t n,
                                               double width,
                                               double height,
                                               struct IsomatchScene **out);

/**
 * Number of points, or 0 for NULL.
 *
 * # Safety
 * `scene` must be NULL or a live handle.
 */
size_t isomatch_scene_len(const struct IsomatchScene *scene);

/**
 * # Safety
 * `scene` must be NULL or a handle not yet freed.
 */
void isomatch_scene_free(struct IsomatchScene *scene);

/**
 * Reads a template file.
 *
 * # Safety
 * As for [`isomatch_scene_load`].
 */
enum IsomatchStatus isomatch_template_load(const char *path,
                                           double width,
                                           double height,
                                           struct IsomatchTemplate **out);

/**
 * Template over `scene` visiting the `n` scene indices in `order`. A NULL
 * `order` selects every point in scene order.
 *
 * # Safety
 * `scene` must be a live handle, `order` NULL or `n` indices, `out` valid.
 */
enum IsomatchStatus isomatch_template_from_scene(const struct IsomatchScene *scene,
                                                 const size_t *order,
                                                 size_t n,
                                                 struct IsomatchTemplate **out);

/**
 * Number of template points, or 0 for NULL.
 *
 * # Safety
 * `template` must be NULL or a live handle.
 */
size_t isomatch_template_len(const struct IsomatchTemplate *template_);

/**
 * # Safety
 * `template` must be NULL or a handle not yet freed.
 */
void isomatch_template_free(struct IsomatchTemplate *template_);

/**
 * Reads a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum IsomatchStatus isomatch_model_load(const char *path, struct IsomatchModel **out);

/**
 * The unlearned model: every feature group, Shape Context descriptors,
 * unit weights and `p` candidates per template point.
 *
 * # Safety
 * `out` must be valid.
 */
enum IsomatchStatus isomatch_model_uniform(size_t p, struct IsomatchModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void isomatch_model_free(struct IsomatchModel *model);

/**
 * Matches `template` into `target`. Writes one target index per template
 * point into `assignment`, which must hold `capacity` entries with
 * `capacity >= isomatch_template_len(template)`. With `linear` set only
 * the unary weights and linear assignment are used.
 *
 * # Safety
 * Handles must be live and `assignment` must point to `capacity` entries.
 */
enum IsomatchStatus isomatch_match(const struct IsomatchTemplate *template_,
                                   const struct IsomatchScene *target,
                                   const struct IsomatchModel *model,
                                   bool linear,
                                   size_t *assignment,
                                   size_t capacity);

/**
 * Fraction of the `n` entries where `y` and `truth` differ.
 *
 * # Safety
 * `y` and `truth` must point to `n` entries and `out` must be valid.
 */
enum IsomatchStatus isomatch_hamming_loss(const size_t *y,
                                          const size_t *truth,
                                          size_t n,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISOMATCH_H */
