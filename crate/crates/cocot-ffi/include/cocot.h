#ifndef COCOT_H
#define COCOT_H

/* Generated by cbindgen from the cocot-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code for every FFI call.
typedef enum CocotStatus {
  COCOT_STATUS_OK = 0,
  COCOT_STATUS_NULL_POINTER = 1,
  COCOT_STATUS_INVALID_UTF8 = 2,
  COCOT_STATUS_INVALID_ARGUMENT = 3,
  COCOT_STATUS_PARSE_FAILED = 4,
  COCOT_STATUS_OUT_OF_RANGE = 5,
  COCOT_STATUS_INTERNAL_ERROR = 6,
} CocotStatus;

// Answer matcher configured once and reused across calls. Opaque.
typedef struct CocotMatcher CocotMatcher;

// Aspect-preserving square embedding of a `width x height` image.
typedef struct CocotPadTransform {
  double scale;
  int64_t pad_x;
  int64_t pad_y;
  int64_t target;
} CocotPadTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *cocot_version(void);

// Release a string returned through any `out` parameter.
//
// # Safety
// `s` must be a pointer previously written by this library and not yet
// freed; null is ignored.
void cocot_string_free(char *s);

// Extract question keywords as a JSON array of strings.
//
// # Safety
// `question` must be a valid NUL-terminated string and `out_json` a valid
// pointer.
enum CocotStatus cocot_extract_keywords(const char *question, char **out_json);

// True when the answer contains a comma, slash, or standalone "and".
//
// # Safety
// `answer` must be a valid NUL-terminated string and `out` a valid pointer.
enum CocotStatus cocot_is_compound_answer(const char *answer, bool *out);

// Create a matcher handle; release with [`cocot_matcher_free`].
struct CocotMatcher *cocot_matcher_new(bool strip_articles,
                                       double numeric_rel_tol,
                                       size_t containment_max_gold_tokens);

// Matcher with the default configuration.
struct CocotMatcher *cocot_matcher_default(void);

// Release a matcher handle.
//
// # Safety
// `matcher` must come from a matcher constructor and not be freed twice;
// null is ignored.
void cocot_matcher_free(struct CocotMatcher *matcher);

// Normalize an answer under the matcher's configuration.
//
// # Safety
// All pointers must be valid; `answer` NUL-terminated.
enum CocotStatus cocot_normalize_answer(const struct CocotMatcher *matcher,
                                        const char *answer,
                                        char **out);

// Extract the core answer from a verbose model response.
//
// # Safety
// All pointers must be valid; `response` NUL-terminated.
enum CocotStatus cocot_extract_core_answer(const struct CocotMatcher *matcher,
                                           const char *response,
                                           char **out);

// Does the prediction match any of `n_golds` gold answers?
//
// # Safety
// `golds` must point to `n_golds` valid NUL-terminated strings; all other
// pointers must be valid.
enum CocotStatus cocot_answers_match(const struct CocotMatcher *matcher,
                                     const char *prediction,
                                     const char *const *golds,
                                     size_t n_golds,
                                     bool *out);

// Intersection over union of two boxes given as corner coordinates.
//
// # Safety
// `out` must be a valid pointer.
enum CocotStatus cocot_iou(double ax1,
                           double ay1,
                           double ax2,
                           double ay2,
                           double bx1,
                           double by1,
                           double bx2,
                           double by2,
                           double *out);

// Compute the crop-and-pad transform for an image.
//
// # Safety
// `out` must be a valid pointer.
enum CocotStatus cocot_compute_pad_transform(int64_t width,
                                             int64_t height,
                                             int64_t target,
                                             struct CocotPadTransform *out);

// Parse a structured reasoning step out of raw model text; the step comes
// back as a JSON object `{region_index, role, reasoning, relation}`.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out_json` a valid
// pointer.
enum CocotStatus cocot_parse_step_output(const char *text, size_t region_count, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COCOT_H */
