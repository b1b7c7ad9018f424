#ifndef CNTRACK_H
#define CNTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum CntStatus {
  CNT_STATUS_OK = 0,
  CNT_STATUS_NULL_POINTER = 1,
  CNT_STATUS_INVALID_ARGUMENT = 2,
  CNT_STATUS_CONFIG = 3,
  CNT_STATUS_DIMENSION_MISMATCH = 4,
  CNT_STATUS_OUT_OF_RANGE = 5,
  CNT_STATUS_INTERNAL = 6,
  CNT_STATUS_PANIC = 7,
} CntStatus;

typedef enum CntMode {
  CNT_MODE_NORMAL = 0,
  CNT_MODE_GRADED = 1,
  CNT_MODE_COASTING = 2,
} CntMode;

/*
 Opaque tracker handle.
 */
typedef struct CntTracker CntTracker;

/*
 One live track. The box is in pixels with a top-left origin.
 */
typedef struct CntTrackRecord {
  uint64_t id;
  double x;
  double y;
  double w;
  double h;
  double vx;
  double vy;
  double confidence;
  enum CntMode mode;
  uint64_t age;
  uint64_t misses;
} CntTrackRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Create a tracker. `config_json` may be NULL for the defaults, or a JSON
 object with any subset of the configuration keys.

 # Safety
 `config_json` must be NULL or a valid NUL-terminated string; `out` must be
 a valid pointer.
 */
enum CntStatus cnt_tracker_new(const char *config_json, struct CntTracker **out);

/*
 Release a tracker. NULL is ignored.

 # Safety
 `t` must be NULL or a handle from [`cnt_tracker_new`] not yet freed.
 */
void cnt_tracker_free(struct CntTracker *t);

/*
 Push one packed RGB8 frame of `width * height * 3` bytes.

 # Safety
 `t` must be a live handle and `rgb` must point to `len` readable bytes.
 */
enum CntStatus cnt_tracker_push_frame(struct CntTracker *t,
                                      const uint8_t *rgb,
                                      size_t len,
                                      uint32_t width,
                                      uint32_t height);

/*
 1 once the background model is built, 0 before, -1 for NULL.

 # Safety
 `t` must be NULL or a live handle.
 */
int32_t cnt_tracker_is_bootstrapped(const struct CntTracker *t);

/*
 Number of live tracks after the last pushed frame.

 # Safety
 `t` must be a live handle and `out` a valid pointer.
 */
enum CntStatus cnt_tracker_track_count(const struct CntTracker *t, size_t *out);

/*
 Copy track `index` (in `0..count`) into `out`.

 # Safety
 `t` must be a live handle and `out` a valid pointer.
 */
enum CntStatus cnt_tracker_get_track(const struct CntTracker *t,
                                     size_t index,
                                     struct CntTrackRecord *out);

/*
 Description of the last failure on this thread, or NULL. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *cnt_last_error(void);

/*
 Library version, a static NUL-terminated string.
 */
const char *cnt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CNTRACK_H */
