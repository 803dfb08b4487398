#ifndef CONFSPEC_H
#define CONFSPEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConfspecStatus {
  CONFSPEC_STATUS_OK = 0,
  CONFSPEC_STATUS_NULL_POINTER = 1,
  CONFSPEC_STATUS_INVALID_ARGUMENT = 2,
  CONFSPEC_STATUS_INPUT_ERROR = 3,
  CONFSPEC_STATUS_NUMERICAL_ERROR = 4,
  CONFSPEC_STATUS_BUFFER_TOO_SMALL = 5,
  CONFSPEC_STATUS_PANIC = 6,
} ConfspecStatus;

typedef enum ConfspecInit {
  CONFSPEC_INIT_UNIFORM = 0,
  CONFSPEC_INIT_RANDOM = 1,
} ConfspecInit;

typedef enum ConfspecRunStatus {
  CONFSPEC_RUN_STATUS_CONVERGED = 0,
  CONFSPEC_RUN_STATUS_COLLAPSE = 1,
  CONFSPEC_RUN_STATUS_ITERATION_CAP = 2,
} ConfspecRunStatus;

typedef struct ConfspecMesh ConfspecMesh;

typedef struct ConfspecResult ConfspecResult;

// Ascent parameters. `n_schedule` may be null to keep the default schedule
// (4, 16, 64) in units of 1/A.
typedef struct ConfspecAscentOptions {
  const double *n_schedule;
  size_t n_schedule_len;
  double damping;
  size_t max_iters;
  double lambda_tol;
  // 0 or -0.5.
  double floor;
  uint64_t seed;
} ConfspecAscentOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *confspec_version(void);

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from this thread.
const char *confspec_last_error(void);

// Builds a mesh from a generator spec such as `icosphere:4` or
// `flat-torus:equilateral:48`.
enum ConfspecStatus confspec_mesh_generate(const char *spec, struct ConfspecMesh **out);

// Loads an OFF, OBJ or intrinsic-JSON mesh. `format` may be null to infer it
// from the extension.
enum ConfspecStatus confspec_mesh_load(const char *path,
                                       const char *format,
                                       struct ConfspecMesh **out);

void confspec_mesh_free(struct ConfspecMesh *mesh);

// Vertex count, genus and total area.
enum ConfspecStatus confspec_mesh_stats(const struct ConfspecMesh *mesh,
                                        size_t *vertices,
                                        size_t *genus,
                                        double *area);

// Lowest `k` nonzero eigenvalues of the pencil, scaled so that they equal
// `λ·A`. `density` may be null for the uniform density; otherwise it holds
// one value per vertex and is rescaled to unit mass. `eigenvalues` must have
// room for `k` entries.
enum ConfspecStatus confspec_spectrum(const struct ConfspecMesh *mesh,
                                      const double *density,
                                      size_t density_len,
                                      size_t k,
                                      double *eigenvalues);

struct ConfspecAscentOptions confspec_ascent_options_default(void);

// Runs the ascent and certifies the result. `options` may be null for
// defaults; `init_seed` is used only with `CONFSPEC_INIT_RANDOM`.
enum ConfspecStatus confspec_maximize(const struct ConfspecMesh *mesh,
                                      const struct ConfspecAscentOptions *options,
                                      enum ConfspecInit init,
                                      uint64_t init_seed,
                                      struct ConfspecResult **out);

void confspec_result_free(struct ConfspecResult *result);

enum ConfspecStatus confspec_result_lambda1_area(const struct ConfspecResult *result,
                                                 double *value);

enum ConfspecStatus confspec_result_status(const struct ConfspecResult *result,
                                           enum ConfspecRunStatus *status);

// Copies the final density into `buffer`. `len` receives the vertex count;
// with a null or short buffer nothing is copied and
// `CONFSPEC_STATUS_BUFFER_TOO_SMALL` is returned.
enum ConfspecStatus confspec_result_density(const struct ConfspecResult *result,
                                            double *buffer,
                                            size_t capacity,
                                            size_t *len);

// Certificate as JSON. Release the string with [`confspec_string_free`].
enum ConfspecStatus confspec_result_certificate_json(const struct ConfspecResult *result,
                                                     char **json);

void confspec_string_free(char *s);

// `σ_e(x)` for `|e| < 1` and unit `x`; all arrays hold 3 doubles.
enum ConfspecStatus confspec_moebius_map(const double *e, const double *x, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFSPEC_H */
