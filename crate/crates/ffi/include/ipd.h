#ifndef IPD_H
#define IPD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IpdStatus {
  IPD_STATUS_OK = 0,
  IPD_STATUS_NULL_ARGUMENT = 1,
  IPD_STATUS_INVALID_INPUT = 2,
  IPD_STATUS_NO_INSTANCES = 3,
  IPD_STATUS_DEGENERATE = 4,
  IPD_STATUS_PARSE = 5,
  IPD_STATUS_LOAD = 6,
  IPD_STATUS_IO = 7,
  IPD_STATUS_INCOMPLETE = 8,
  IPD_STATUS_PANIC = 9,
} IpdStatus;

// Result of evaluating two dataset manifests.
typedef struct IpdEvaluation IpdEvaluation;

// Accumulates paired performance values.
typedef struct IpdRecords IpdRecords;

// Axis-aligned box in pixels, center/width/height.
typedef struct IpdBox {
  double cx;
  double cy;
  double w;
  double h;
} IpdBox;

typedef struct IpdPoint {
  double x;
  double y;
} IpdPoint;

// `p -> [a11 a12; a21 a22] p + [tx; ty]`.
typedef struct IpdAffine {
  double a11;
  double a12;
  double a21;
  double a22;
  double tx;
  double ty;
} IpdAffine;

typedef struct IpdRegistrationConfig {
  uint64_t max_iterations;
  // Negative selects the automatic threshold.
  double early_exit_score;
  uint64_t rng_seed;
  double trim_fraction;
  // Neighborhood size for local triple sampling; 0 samples uniformly.
  uint32_t local_neighbors;
  bool refine;
} IpdRegistrationConfig;

typedef struct IpdRegistrationResult {
  // Maps synthetic coordinates into real-image coordinates.
  struct IpdAffine transform;
  double score;
  uint64_t iterations_used;
  uint64_t hypothesis_count;
  bool fallback;
} IpdRegistrationResult;

typedef struct IpdPipelineConfig {
  struct IpdRegistrationConfig registration;
  // Fixed gate in pixels; when not positive the gate is
  // `gate_fraction x` the median real box diagonal.
  double gate_distance;
  double gate_fraction;
  double conf_threshold;
} IpdPipelineConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ipd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ipd_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ipd_string_free(char *s);

// Intersection over union of two boxes.
//
// # Safety
// `a`, `b` and `out` must be valid pointers.
enum IpdStatus ipd_iou(const struct IpdBox *a, const struct IpdBox *b, double *out);

// Exact affine map taking `src[i]` to `dst[i]` for three point pairs.
//
// # Safety
// `src` and `dst` must point to three points each; `out` must be valid.
enum IpdStatus ipd_fit_affine_3pt(const struct IpdPoint *src,
                                  const struct IpdPoint *dst,
                                  struct IpdAffine *out);

// Fills `out` with the library defaults.
//
// # Safety
// `out` must be valid.
enum IpdStatus ipd_registration_config_default(struct IpdRegistrationConfig *out);

// Registers synthetic points onto real points.
//
// # Safety
// `synth` and `real` must point to `n_synth` and `n_real` points; `cfg` may
// be null for defaults; `out` must be valid.
enum IpdStatus ipd_register(const struct IpdPoint *synth,
                            size_t n_synth,
                            const struct IpdPoint *real,
                            size_t n_real,
                            const struct IpdRegistrationConfig *cfg,
                            struct IpdRegistrationResult *out);

struct IpdRecords *ipd_records_new(void);

// # Safety
// `h` must come from [`ipd_records_new`] and not have been freed. Null is ignored.
void ipd_records_free(struct IpdRecords *h);

// Appends one matched instance pair. `image_id` may be null.
//
// # Safety
// `h` must be a live handle; `image_id` null or NUL-terminated.
enum IpdStatus ipd_records_push(struct IpdRecords *h,
                                const char *image_id,
                                double p_real,
                                double p_synth);

// Mean absolute difference over the pushed pairs.
//
// # Safety
// `h` must be a live handle and `out` valid.
enum IpdStatus ipd_records_compute(const struct IpdRecords *h, double *out);

// # Safety
// `out` must be valid.
enum IpdStatus ipd_pipeline_config_default(struct IpdPipelineConfig *out);

// Evaluates a real and a synthetic manifest. `cfg` may be null for defaults.
//
// # Safety
// Paths must be NUL-terminated UTF-8; `out` must be valid. On success
// `*out` receives a handle to release with [`ipd_evaluation_free`].
enum IpdStatus ipd_evaluate_manifests(const char *real_manifest,
                                      const char *synth_manifest,
                                      const struct IpdPipelineConfig *cfg,
                                      struct IpdEvaluation **out);

// # Safety
// `h` must be a live handle or null.
void ipd_evaluation_free(struct IpdEvaluation *h);

// IPD value of an evaluation; NaN for a null handle.
//
// # Safety
// `h` must be a live handle or null.
double ipd_evaluation_value(const struct IpdEvaluation *h);

// Number of matched instance pairs; 0 for a null handle.
//
// # Safety
// `h` must be a live handle or null.
uint64_t ipd_evaluation_instance_count(const struct IpdEvaluation *h);

// Full JSON report; release with [`ipd_string_free`]. Null on failure.
//
// # Safety
// `h` must be a live handle or null.
char *ipd_evaluation_to_json(const struct IpdEvaluation *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPD_H */
