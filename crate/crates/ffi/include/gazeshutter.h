/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef GAZESHUTTER_H
#define GAZESHUTTER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_IO = 3,
  GS_STATUS_PARSE = 4,
  GS_STATUS_DATA = 5,
  GS_STATUS_TRAINING = 6,
  GS_STATUS_CONTRACT = 7,
  GS_STATUS_CONFIG = 8,
  GS_STATUS_UTF8 = 9,
  GS_STATUS_OUT_OF_RANGE = 10,
  GS_STATUS_PANIC = 99,
} GsStatus;

typedef enum GsClass {
  GS_CLASS_NON_SENSITIVE = 0,
  GS_CLASS_SENSITIVE = 1,
} GsClass;

typedef enum GsShutterStatus {
  GS_SHUTTER_STATUS_OPEN = 0,
  GS_SHUTTER_STATUS_CLOSED = 1,
} GsShutterStatus;

/**
 * Open-shutter prediction passed to [`gs_shutter_step`].
 */
typedef enum GsOpenPrediction {
  /**
   * The shutter is closed; no scene-based prediction exists.
   */
  GS_OPEN_PREDICTION_NONE = -1,
  GS_OPEN_PREDICTION_NON_SENSITIVE = 0,
  GS_OPEN_PREDICTION_SENSITIVE = 1,
} GsOpenPrediction;

typedef struct GsFeatureMatrix GsFeatureMatrix;

typedef struct GsRecording GsRecording;

typedef struct GsSceneModel GsSceneModel;

typedef struct GsShutter GsShutter;

typedef struct GsSvmModel GsSvmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *gs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gs_version(void);

/**
 * Number of eye-movement features per row.
 */
size_t gs_eye_feature_count(void);

/**
 * Loads a recording from its manifest.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_recording_load(const char *manifest_path,
                                double validity_threshold,
                                struct GsRecording **out);

/**
 * # Safety
 * `rec` must be null or a handle from [`gs_recording_load`] not yet freed.
 */
void gs_recording_free(struct GsRecording *rec);

/**
 * # Safety
 * `rec` must be a live recording handle; `out` must be writable.
 */
enum GsStatus gs_recording_sample_count(const struct GsRecording *rec, size_t *out);

/**
 * Extracts the per-second feature stream with default parameters.
 *
 * # Safety
 * `rec` must be a live recording handle; `out` must be writable.
 */
enum GsStatus gs_extract_features(const struct GsRecording *rec, struct GsFeatureMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from [`gs_extract_features`] not yet freed.
 */
void gs_features_free(struct GsFeatureMatrix *m);

/**
 * Number of rows (seconds); 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live feature-matrix handle.
 */
size_t gs_features_rows(const struct GsFeatureMatrix *m);

/**
 * Copies row `row` into `buf`, which must hold at least
 * [`gs_eye_feature_count`] values, and writes the row's end time to `t_end`.
 *
 * # Safety
 * `m` must be a live handle; `buf` must point to `buf_len` writable doubles;
 * `t_end` must be null or writable.
 */
enum GsStatus gs_features_row(const struct GsFeatureMatrix *m,
                              size_t row,
                              double *buf,
                              size_t buf_len,
                              double *t_end);

/**
 * Trains an RBF SVM on `rows` (row-major, `n` x `dim`) with standardization.
 * `gamma <= 0` selects `1 / dim`.
 *
 * # Safety
 * `x` must point to `n * dim` doubles, `labels` to `n` classes; `out` must
 * be writable.
 */
enum GsStatus gs_svm_train(const double *x,
                           size_t n,
                           size_t dim,
                           const enum GsClass *labels,
                           double c,
                           double gamma,
                           struct GsSvmModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_svm_load(const char *path, struct GsSvmModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum GsStatus gs_svm_save(const struct GsSvmModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gs_svm_dim(const struct GsSvmModel *model);

/**
 * Classifies one raw feature vector. `decision` receives the signed
 * decision value; `f >= 0` is sensitive.
 *
 * # Safety
 * `x` must point to `len` doubles; `class` and `decision` must be null or
 * writable.
 */
enum GsStatus gs_svm_predict(const struct GsSvmModel *model,
                             const double *x,
                             size_t len,
                             enum GsClass *class_,
                             double *decision);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void gs_svm_free(struct GsSvmModel *model);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_scene_load(const char *path, struct GsSceneModel **out);

/**
 * Direct scene classification. `score` receives the sensitive probability.
 *
 * # Safety
 * `descriptor` must point to `len` doubles; `class` and `score` must be
 * null or writable.
 */
enum GsStatus gs_scene_predict(const struct GsSceneModel *model,
                               const double *descriptor,
                               size_t len,
                               enum GsClass *class_,
                               double *score);

/**
 * Writes the 68-value embedding of `descriptor` into `buf`.
 *
 * # Safety
 * `descriptor` must point to `len` doubles; `buf` to `buf_len` writable
 * doubles.
 */
enum GsStatus gs_scene_embed(const struct GsSceneModel *model,
                             const double *descriptor,
                             size_t len,
                             double *buf,
                             size_t buf_len);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void gs_scene_free(struct GsSceneModel *model);

/**
 * A shutter that starts open and stays closed at least `min_close` seconds.
 *
 * # Safety
 * `out` must be writable.
 */
enum GsStatus gs_shutter_new(uint32_t min_close, struct GsShutter **out);

/**
 * # Safety
 * `shutter` must be null or a live handle.
 */
enum GsShutterStatus gs_shutter_status(const struct GsShutter *shutter);

/**
 * Whether [`gs_shutter_step`] at second `t` will use the eye prediction.
 *
 * # Safety
 * `shutter` must be null or a live handle.
 */
bool gs_shutter_wants_eye_prediction(const struct GsShutter *shutter, int64_t t);

/**
 * Advances one second. `open_prediction` must be `None` exactly when the
 * shutter is closed; `eye_prediction` is read only when the minimum closing
 * interval has elapsed. `predicted` receives the class for second `t`.
 *
 * # Safety
 * `shutter` must be a live handle; `predicted` must be null or writable.
 */
enum GsStatus gs_shutter_step(struct GsShutter *shutter,
                              int64_t t,
                              enum GsOpenPrediction open_prediction,
                              enum GsClass eye_prediction,
                              enum GsClass *predicted);

/**
 * # Safety
 * `shutter` must be null or a handle from [`gs_shutter_new`] not yet freed.
 */
void gs_shutter_free(struct GsShutter *shutter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAZESHUTTER_H */
