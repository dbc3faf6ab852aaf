#ifndef DKTLAB_H
#define DKTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DktStatus {
  DKT_STATUS_OK = 0,
  DKT_STATUS_NULL_POINTER = 1,
  DKT_STATUS_INVALID_ARGUMENT = 2,
  DKT_STATUS_IO = 3,
  DKT_STATUS_PARSE = 4,
  DKT_STATUS_UNKNOWN_TAG = 5,
  DKT_STATUS_OUT_OF_RANGE = 6,
  DKT_STATUS_BUFFER_TOO_SMALL = 7,
  DKT_STATUS_MODEL = 8,
  DKT_STATUS_PANIC = 99,
} DktStatus;

/**
 * A loaded model. Shared by every session created from it.
 */
typedef struct DktModel DktModel;

/**
 * One student's recurrent state.
 */
typedef struct DktSession DktSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *dkt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dkt_version(void);

/**
 * Loads a model file written by `dktlab train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DktStatus dkt_model_load(const char *path, struct DktModel **out);

/**
 * Releases a model. Sessions created from it stay valid. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`dkt_model_load`] and not be freed twice.
 */
void dkt_model_free(struct DktModel *model);

/**
 * Number of exercise tags M.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DktStatus dkt_model_exercise_count(const struct DktModel *model, size_t *out);

/**
 * Hidden state width.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DktStatus dkt_model_hidden_dim(const struct DktModel *model, size_t *out);

/**
 * Index of an exercise tag as stored in the model file.
 *
 * # Safety
 * `model` must be a live handle, `tag` NUL-terminated, `out` valid.
 */
enum DktStatus dkt_model_tag_index(const struct DktModel *model, const char *tag, size_t *out);

/**
 * Starts a student with no history.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum DktStatus dkt_session_new(const struct DktModel *model, struct DktSession **out);

/**
 * Releases a session. NULL is ignored.
 *
 * # Safety
 * `session` must come from [`dkt_session_new`] and not be freed twice.
 */
void dkt_session_free(struct DktSession *session);

/**
 * Feeds one answer (`correct` non-zero for a correct answer).
 *
 * # Safety
 * `session` must be a live handle.
 */
enum DktStatus dkt_session_observe(struct DktSession *session, size_t exercise, int32_t correct);

/**
 * Answers observed so far.
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum DktStatus dkt_session_length(const struct DktSession *session, size_t *out);

/**
 * Writes the predicted probability of answering each exercise correctly
 * into `out[0..len]`. `len` must be at least the exercise count.
 *
 * # Safety
 * `session` must be a live handle and `out` must point to `len` doubles.
 */
enum DktStatus dkt_session_predict(const struct DktSession *session, double *out, size_t len);

/**
 * Area under the ROC curve of `scores` against 0/1 `labels`.
 *
 * # Safety
 * `labels` and `scores` must each point to `n` values; `out` must be valid.
 */
enum DktStatus dkt_auc(const uint8_t *labels, const double *scores, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DKTLAB_H */
