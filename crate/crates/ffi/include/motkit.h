#ifndef MOTKIT_H
#define MOTKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of a C API call.
typedef enum MotStatus {
  // The call succeeded.
  MOT_STATUS_OK = 0,
  // A required pointer argument was null.
  MOT_STATUS_NULL_POINTER = 1,
  // An argument was rejected (bad box, bad config, wrong order).
  MOT_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read or written.
  MOT_STATUS_IO_ERROR = 3,
  // A file existed but its contents were malformed.
  MOT_STATUS_PARSE_ERROR = 4,
  // An unexpected internal failure; a bug if it is reachable.
  MOT_STATUS_INTERNAL_ERROR = 5,
} MotStatus;

// A loaded appearance model. Create with `mot_embedder_load`, destroy
// with `mot_embedder_free`.
typedef struct MotEmbedder MotEmbedder;

// An online tracker bound to a copy of an embedder. Create with
// `mot_tracker_new`, destroy with `mot_tracker_free`.
typedef struct MotTracker MotTracker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread; empty when the last
// call succeeded. The pointer stays valid until the next call into this
// library from the same thread.
const char *mot_last_error(void);

// Library version as a static nul-terminated string.
const char *mot_version(void);

// Loads an embedder checkpoint (JSON, as written by training) from
// `checkpoint_path` into a new handle stored in `*out`.
enum MotStatus mot_embedder_load(const char *checkpoint_path, struct MotEmbedder **out);

// Embedding dimensionality of a loaded model, or -1 for a null handle.
int32_t mot_embedder_dim(const struct MotEmbedder *embedder);

// Embeds `num_boxes` crops of an RGB image (`width*height*3` bytes, rows
// top to bottom). `boxes` holds `num_boxes * 4` doubles as x, y, width,
// height per box; `out` receives `num_boxes * dim` doubles, one embedding
// row per box in input order.
enum MotStatus mot_embedder_embed(const struct MotEmbedder *embedder,
                                  const uint8_t *rgb,
                                  size_t width,
                                  size_t height,
                                  const double *boxes,
                                  size_t num_boxes,
                                  double *out);

// Destroys an embedder handle; null is ignored.
void mot_embedder_free(struct MotEmbedder *embedder);

// Creates a tracker that embeds its own crops with a copy of `embedder`.
// `config_toml` may be null for default behavior or a TOML document of
// tracker settings (thresholds, costs, max age). The handle is stored in
// `*out` and is independent of the embedder handle's lifetime.
enum MotStatus mot_tracker_new(const struct MotEmbedder *embedder,
                               const char *config_toml,
                               struct MotTracker **out);

// Advances the tracker by one frame. `frame` is 1-based and must be
// strictly greater than the previous call's. `boxes` holds
// `num_detections * 4` doubles (x, y, width, height); `confidences` one
// double per detection in [0, 1]. Output rows are written to `out_rows` as
// 7 doubles each — frame, track id, x, y, width, height, confidence — and
// their count to `*out_count`. `out_rows` must hold at least
// `num_detections * 7` doubles; at most one row is produced per detection.
enum MotStatus mot_tracker_step(struct MotTracker *tracker,
                                uint32_t frame,
                                const uint8_t *rgb,
                                size_t width,
                                size_t height,
                                const double *boxes,
                                const double *confidences,
                                size_t num_detections,
                                double *out_rows,
                                size_t *out_count);

// Number of tracks the tracker currently holds (any lifecycle state), or
// -1 for a null handle.
int64_t mot_tracker_track_count(const struct MotTracker *tracker);

// Destroys a tracker handle; null is ignored.
void mot_tracker_free(struct MotTracker *tracker);

// Evaluates a result file against a ground-truth file (both in the
// comma-separated interchange format) and stores a JSON report in
// `*out_json`: detection/association accuracy, identity measures, and
// event counts. Free the string with `mot_string_free`.
enum MotStatus mot_evaluate_files(const char *gt_path, const char *results_path, char **out_json);

// Frees a string returned by this library; null is ignored.
void mot_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTKIT_H */
