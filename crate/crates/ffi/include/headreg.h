#ifndef HEADREG_H
#define HEADREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HrAutoScale {
  HR_AUTO_SCALE_OFF = 0,
  HR_AUTO_SCALE_ONE_SHOT = 1,
  HR_AUTO_SCALE_CONTINUOUS = 2,
} HrAutoScale;

/**
 * Result code of every call.
 */
typedef enum HrStatus {
  HR_STATUS_OK = 0,
  HR_STATUS_NULL_ARGUMENT = 1,
  HR_STATUS_INVALID_ARGUMENT = 2,
  HR_STATUS_PARSE = 3,
  HR_STATUS_BAD_POSE = 4,
  HR_STATUS_MODEL_LOAD = 5,
  HR_STATUS_INTERNAL = 6,
  HR_STATUS_PANIC = 7,
} HrStatus;

/**
 * Opaque registration engine: one camera, one model, one tracking state.
 */
typedef struct HrEngine HrEngine;

typedef struct HrRect {
  double x;
  double y;
  double w;
  double h;
} HrRect;

/**
 * Output of one step. Metric fields are meaningful only when `has_metrics` is 1.
 */
typedef struct HrFrameResult {
  uint64_t seq;
  double model_matrix[16];
  double s_w;
  double s_h;
  double anchor_u;
  double anchor_v;
  struct HrRect box_m;
  int32_t has_head_box;
  struct HrRect head_box;
  int32_t has_metrics;
  double ratio_w;
  double ratio_h;
  double e_w_pct;
  double e_h_pct;
  double iou;
  int32_t visible;
  double opacity;
} HrFrameResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *hr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hr_version(void);

/**
 * Creates an engine from a model reference (`builtin:*` or a `.glb` path).
 *
 * # Safety
 * `model_ref` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HrStatus hr_engine_new(const char *model_ref,
                            uint32_t image_w,
                            uint32_t image_h,
                            double fov_v_deg,
                            struct HrEngine **out);

/**
 * Creates an engine from GLB bytes held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum HrStatus hr_engine_new_from_glb(const uint8_t *data,
                                     size_t len,
                                     uint32_t image_w,
                                     uint32_t image_h,
                                     double fov_v_deg,
                                     struct HrEngine **out);

/**
 * Releases an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must come from `hr_engine_new*` and not be used afterwards.
 */
void hr_engine_free(struct HrEngine *engine);

/**
 * # Safety
 * `engine` must be a live handle.
 */
enum HrStatus hr_engine_set_auto_scale(struct HrEngine *engine, enum HrAutoScale mode);

/**
 * Applies a partial parameter update given as a JSON object with any of
 * `manual_scale`, `offset`, `opacity`, `visible`, `auto_scale_enabled`,
 * `auto_scale_once`, `uniform_scale`, `smoothing_alpha`, `reset_scale`.
 * Nothing is applied if any field is invalid.
 *
 * # Safety
 * `engine` must be a live handle and `json` NUL-terminated.
 */
enum HrStatus hr_engine_set_params_json(struct HrEngine *engine, const char *json);

/**
 * Runs one frame: `pose` is the face pose (16 doubles, column-major),
 * `head_box` the observed head rectangle or NULL.
 *
 * # Safety
 * `engine` must be live, `pose` point to 16 doubles, `head_box` be NULL or
 * valid, and `out` writable.
 */
enum HrStatus hr_engine_step(struct HrEngine *engine,
                             uint64_t seq,
                             const double *pose,
                             const struct HrRect *head_box,
                             struct HrFrameResult *out);

/**
 * Runs one frame given as a session-format JSON object (allows `mask_rle`).
 *
 * # Safety
 * `engine` must be live, `frame_json` NUL-terminated, `out` writable.
 */
enum HrStatus hr_engine_step_json(struct HrEngine *engine,
                                  const char *frame_json,
                                  struct HrFrameResult *out);

/**
 * Current image-space scale factors.
 *
 * # Safety
 * `engine` must be live; `s_w` and `s_h` writable.
 */
enum HrStatus hr_engine_scale(const struct HrEngine *engine, double *s_w, double *s_h);

/**
 * Intersection over union of two rectangles.
 *
 * # Safety
 * `a`, `b` must be valid and `out` writable.
 */
enum HrStatus hr_iou(const struct HrRect *a, const struct HrRect *b, double *out);

/**
 * Projects a camera-frame point (3 doubles) to pixels (2 doubles) for a
 * pinhole camera given by vertical field of view and image size.
 *
 * # Safety
 * `point` must point to 3 doubles and `out_uv` to 2 writable doubles.
 */
enum HrStatus hr_project_point(double fov_v_deg,
                               uint32_t image_w,
                               uint32_t image_h,
                               const double *point,
                               double *out_uv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEADREG_H */
