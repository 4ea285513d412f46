#ifndef NEURAM_H
#define NEURAM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum NeuramStatus {
  NEURAM_STATUS_OK = 0,
  NEURAM_STATUS_NULL_POINTER = 1,
  NEURAM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input outside the model domain or latent interval.
   */
  NEURAM_STATUS_OUT_OF_DOMAIN = 3,
  NEURAM_STATUS_UNKNOWN_MODEL = 4,
  NEURAM_STATUS_IO = 5,
  NEURAM_STATUS_PARSE = 6,
  /**
   * Non-finite values, constant models or degenerate gradients.
   */
  NEURAM_STATUS_NUMERICAL = 7,
  NEURAM_STATUS_BUFFER_TOO_SMALL = 8,
  NEURAM_STATUS_PANIC = 9,
} NeuramStatus;

/**
 * Trained reduction: encoder, decoder and latent surrogate.
 */
typedef struct NeuramArtifact NeuramArtifact;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *neuram_last_error(void);

/**
 * Library version as a static string.
 */
const char *neuram_version(void);

/**
 * Loads an artifact from a JSON file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum NeuramStatus neuram_artifact_load(const char *path, struct NeuramArtifact **out);

/**
 * Parses an artifact from a JSON string.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum NeuramStatus neuram_artifact_from_json(const char *json, struct NeuramArtifact **out);

/**
 * Trains a reduction of a registered benchmark on `n` samples with a fixed
 * architecture of `hidden_layers` x `width` tanh layers per network.
 *
 * # Safety
 * `model` must be a valid C string and `out` a valid pointer.
 */
enum NeuramStatus neuram_artifact_train(const char *model,
                                        size_t n,
                                        uint64_t seed,
                                        size_t epochs,
                                        size_t hidden_layers,
                                        size_t width,
                                        struct NeuramArtifact **out);

/**
 * Writes an artifact to a JSON file.
 *
 * # Safety
 * `artifact` must come from this library; `path` must be a valid C string.
 */
enum NeuramStatus neuram_artifact_save(const struct NeuramArtifact *artifact, const char *path);

/**
 * Releases an artifact. Null is ignored.
 *
 * # Safety
 * `artifact` must come from this library and not be used afterwards.
 */
void neuram_artifact_free(struct NeuramArtifact *artifact);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `artifact` must be null or come from this library.
 */
size_t neuram_artifact_dim(const struct NeuramArtifact *artifact);

/**
 * Latent interval `[lo, hi]` spanned by the training encodings.
 *
 * # Safety
 * All pointers must be valid.
 */
enum NeuramStatus neuram_artifact_latent_interval(const struct NeuramArtifact *artifact,
                                                  double *lo,
                                                  double *hi);

/**
 * Latent coordinate of the raw input `x[0..len]`.
 *
 * # Safety
 * `x` must point to `len` doubles; `t` must be valid.
 */
enum NeuramStatus neuram_artifact_encode(const struct NeuramArtifact *artifact,
                                         const double *x,
                                         size_t len,
                                         double *t);

/**
 * Raw manifold point at latent coordinate `t`, written to `out[0..dim]`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum NeuramStatus neuram_artifact_decode(const struct NeuramArtifact *artifact,
                                         double t,
                                         double *out,
                                         size_t len);

/**
 * Surrogate prediction `S(E(x))` in model units.
 *
 * # Safety
 * `x` must point to `len` doubles; `y` must be valid.
 */
enum NeuramStatus neuram_artifact_surrogate(const struct NeuramArtifact *artifact,
                                            const double *x,
                                            size_t len,
                                            double *y);

/**
 * Global manifold sensitivity indices on a uniform latent grid, written to
 * `out[0..dim]`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum NeuramStatus neuram_artifact_global_indices(const struct NeuramArtifact *artifact,
                                                 size_t grid_size,
                                                 double *out,
                                                 size_t len);

/**
 * Input dimension of a registered benchmark model.
 *
 * # Safety
 * `name` must be a valid C string and `dim` a valid pointer.
 */
enum NeuramStatus neuram_model_dim(const char *name, size_t *dim);

/**
 * Evaluates a registered benchmark model at `x[0..len]`.
 *
 * # Safety
 * `name` must be a valid C string, `x` must point to `len` doubles and `y`
 * must be valid.
 */
enum NeuramStatus neuram_model_eval(const char *name, const double *x, size_t len, double *y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEURAM_H */
