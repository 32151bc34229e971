#ifndef SYNESTHESIA_H
#define SYNESTHESIA_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SynStatus {
  SYN_STATUS_OK = 0,
  SYN_STATUS_NULL_POINTER = 1,
  /**
   * Invalid argument, parameter or config.
   */
  SYN_STATUS_INVALID = 2,
  SYN_STATUS_IO = 3,
  SYN_STATUS_NUMERIC = 4,
  /**
   * Malformed file or mismatched tensor shape.
   */
  SYN_STATUS_FORMAT = 5,
  SYN_STATUS_UNKNOWN_LABEL = 6,
  SYN_STATUS_UTF8 = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  SYN_STATUS_PANIC = 8,
} SynStatus;

/**
 * Per-frame audio features.
 */
typedef struct SynFeatures SynFeatures;

/**
 * An RGB image with channels in [0, 1].
 */
typedef struct SynImage SynImage;

/**
 * A painting plan.
 */
typedef struct SynPlan SynPlan;

/**
 * A loaded SYNW1 weight file.
 */
typedef struct SynWeights SynWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *syn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *syn_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void syn_string_free(char *s);

/**
 * Parses and validates a plan from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SynStatus syn_plan_from_json(const char *json, struct SynPlan **out);

/**
 * Serializes a plan; free the result with [`syn_string_free`].
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum SynStatus syn_plan_to_json(const struct SynPlan *plan, char **out);

/**
 * Number of strokes in a plan, 0 for NULL.
 *
 * # Safety
 * `plan` must be NULL or a live handle.
 */
size_t syn_plan_stroke_count(const struct SynPlan *plan);

/**
 * # Safety
 * `plan` must be NULL or a handle not yet freed.
 */
void syn_plan_free(struct SynPlan *plan);

/**
 * Renders a plan into a new image.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum SynStatus syn_render(const struct SynPlan *plan, struct SynImage **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SynStatus syn_image_load_png(const char *path, struct SynImage **out);

/**
 * Writes an 8-bit RGB PNG.
 *
 * # Safety
 * `img` must be a live handle; `path` a NUL-terminated string.
 */
enum SynStatus syn_image_save_png(const struct SynImage *img, const char *path);

/**
 * # Safety
 * `img` must be NULL or a live handle.
 */
size_t syn_image_width(const struct SynImage *img);

/**
 * # Safety
 * `img` must be NULL or a live handle.
 */
size_t syn_image_height(const struct SynImage *img);

/**
 * Copies row-major interleaved RGB into `dst`, which must hold exactly
 * `width * height * 3` values.
 *
 * # Safety
 * `img` must be a live handle; `dst` must point to `len` writable doubles.
 */
enum SynStatus syn_image_pixels(const struct SynImage *img, double *dst, size_t len);

/**
 * # Safety
 * `img` must be NULL or a handle not yet freed.
 */
void syn_image_free(struct SynImage *img);

/**
 * Decodes a WAV file and extracts its features.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SynStatus syn_features_from_wav(const char *path, struct SynFeatures **out);

/**
 * Number of analysis frames, 0 for NULL.
 *
 * # Safety
 * `feats` must be NULL or a live handle.
 */
size_t syn_features_frame_count(const struct SynFeatures *feats);

/**
 * # Safety
 * `feats` must be NULL or a handle not yet freed.
 */
void syn_features_free(struct SynFeatures *feats);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SynStatus syn_weights_load(const char *path, struct SynWeights **out);

/**
 * # Safety
 * `w` must be NULL or a handle not yet freed.
 */
void syn_weights_free(struct SynWeights *w);

/**
 * Speech emotion distribution; writes 9 probabilities in canonical order.
 *
 * # Safety
 * Handles must be live; `probs` must point to 9 writable doubles.
 */
enum SynStatus syn_speech_emotion(const struct SynFeatures *feats,
                                  const struct SynWeights *weights,
                                  double *probs);

/**
 * Maps a dataset label to its canonical emotion index.
 *
 * # Safety
 * `dataset` and `label` must be NUL-terminated; `index` must be writable.
 */
enum SynStatus syn_map_label(const char *dataset, const char *label, uint32_t *index);

/**
 * Static name of canonical emotion `index`, or NULL when out of range.
 */
const char *syn_emotion_name(uint32_t index);

/**
 * Pixel MSE against `target` and, when `grad` is not NULL, its gradient
 * in the plan's flat parameter order (`grad_len` must equal
 * `10 * strokes + 3`).
 *
 * # Safety
 * Handles must be live; `loss` writable; `grad` NULL or `grad_len` doubles.
 */
enum SynStatus syn_loss_pixel_l2(const struct SynPlan *plan,
                                 const struct SynImage *target,
                                 double *loss,
                                 double *grad,
                                 size_t grad_len);

/**
 * Natural-sound loss under the reference encoders of dimension `dim` and
 * seed `seed`, with the default augmentation. Gradient as for
 * [`syn_loss_pixel_l2`].
 *
 * # Safety
 * Handles must be live; `loss` writable; `grad` NULL or `grad_len` doubles.
 */
enum SynStatus syn_loss_natural_sound(const struct SynPlan *plan,
                                      const struct SynFeatures *feats,
                                      size_t dim,
                                      uint64_t seed,
                                      double *loss,
                                      double *grad,
                                      size_t grad_len);

/**
 * Runs a paint config and writes its artifacts to `out_dir`, or to the
 * config's own output directory when `out_dir` is NULL.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated.
 */
enum SynStatus syn_paint(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNESTHESIA_H */
