#ifndef MIDLINE_H
#define MIDLINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MidlineStatus {
  MIDLINE_STATUS_OK = 0,
  MIDLINE_STATUS_NULL_POINTER = 1,
  MIDLINE_STATUS_INVALID_ARGUMENT = 2,
  MIDLINE_STATUS_IO = 3,
  MIDLINE_STATUS_CONFIG = 4,
  MIDLINE_STATUS_NUMERICAL = 5,
  // A buffer supplied by the caller is too small.
  MIDLINE_STATUS_BUFFER_TOO_SMALL = 6,
  MIDLINE_STATUS_PANIC = 7,
} MidlineStatus;

// Camera triplet read from a calibration file.
typedef struct MidlineCameras MidlineCameras;

// Resolved run configuration.
typedef struct MidlineConfig MidlineConfig;

// Frame records read from a records file.
typedef struct MidlineRecords MidlineRecords;

// Outcome of a reconstruction run.
typedef struct MidlineRunSummary {
  size_t frames;
  size_t converged;
  size_t steps;
} MidlineRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string, truncating to `cap` bytes. Returns the buffer
// size needed for the whole message.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t midline_last_error(char *buf, size_t cap);

// Creates a configuration holding the documented defaults.
//
// # Safety
// `out` must point to writable storage for one handle.
enum MidlineStatus midline_config_default(struct MidlineConfig **out);

// Reads and validates a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must point to writable
// storage for one handle.
enum MidlineStatus midline_config_load(const char *path, struct MidlineConfig **out);

// Sets the random seed of a configuration.
//
// # Safety
// `cfg` must be a live handle from this library.
enum MidlineStatus midline_config_set_seed(struct MidlineConfig *cfg, uint64_t seed);

// Replaces the ablation letters of a configuration, e.g. `"ce"`.
//
// # Safety
// `cfg` must be a live handle; `letters` a NUL-terminated string.
enum MidlineStatus midline_config_set_ablate(struct MidlineConfig *cfg, const char *letters);

// # Safety
// `cfg` must be null or a handle not yet freed.
void midline_config_free(struct MidlineConfig *cfg);

// Reconstructs every frame in `frames_dir`, writing records, the summary
// and optional overlays to `out_dir`. Returns `Ok` even when frames fail
// to converge; compare `summary.converged` with `summary.frames`.
//
// # Safety
// `cfg` must be a live handle; the paths NUL-terminated strings;
// `summary` null or writable.
enum MidlineStatus midline_reconstruct(const struct MidlineConfig *cfg,
                                       const char *frames_dir,
                                       const char *calib_path,
                                       const char *out_dir,
                                       bool overlays,
                                       struct MidlineRunSummary *summary);

// Reads a calibration file (JSON or TOML).
//
// # Safety
// `path` must be a NUL-terminated string; `out` writable.
enum MidlineStatus midline_cameras_load(const char *path, struct MidlineCameras **out);

// Projects `n` points (`xyz` triples) into the three views. `out` receives
// `3 * n` pixel pairs, view-major.
//
// # Safety
// `points` must hold `3 * n` doubles and `out` have room for `6 * n`.
enum MidlineStatus midline_project(const struct MidlineCameras *cams,
                                   const double *points,
                                   size_t n,
                                   double *out);

// # Safety
// `cams` must be null or a handle not yet freed.
void midline_cameras_free(struct MidlineCameras *cams);

// Reads a JSON-Lines records file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` writable.
enum MidlineStatus midline_records_load(const char *path, struct MidlineRecords **out);

// Number of records, or 0 for a null handle.
//
// # Safety
// `rec` must be null or a live handle.
size_t midline_records_len(const struct MidlineRecords *rec);

// Copies the midline of record `index` into `points` as `xyz` triples.
// `vertices` receives the vertex count; when `capacity` (in vertices) is
// too small nothing is copied and `BufferTooSmall` is returned.
//
// # Safety
// `rec` must be a live handle; `points` must have room for `3 * capacity`
// doubles; `vertices`, `frame` and `converged` must be null or writable.
enum MidlineStatus midline_records_get(const struct MidlineRecords *rec,
                                       size_t index,
                                       double *points,
                                       size_t capacity,
                                       size_t *vertices,
                                       size_t *frame,
                                       bool *converged);

// # Safety
// `rec` must be null or a handle not yet freed.
void midline_records_free(struct MidlineRecords *rec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIDLINE_H */
