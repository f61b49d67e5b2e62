#ifndef SPIKERF_H
#define SPIKERF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SpikerfStatus {
  SPIKERF_STATUS_OK = 0,
  SPIKERF_STATUS_NULL_POINTER = 1,
  SPIKERF_STATUS_INVALID_ARGUMENT = 2,
  SPIKERF_STATUS_NOT_CONVERGED = 3,
  SPIKERF_STATUS_SINGULAR = 4,
  SPIKERF_STATUS_NUMERICAL = 5,
  SPIKERF_STATUS_IO = 6,
  SPIKERF_STATUS_PANIC = 7,
} SpikerfStatus;

// Built-in pointwise maps, in the order of `Pointwise::ALL`.
typedef enum SpikerfMap {
  SPIKERF_MAP_RELU = 0,
  SPIKERF_MAP_ERF = 1,
  SPIKERF_MAP_TANH = 2,
  SPIKERF_MAP_SIN = 3,
  SPIKERF_MAP_IDENTITY = 4,
  SPIKERF_MAP_H2 = 5,
  SPIKERF_MAP_H3 = 6,
  SPIKERF_MAP_SIGN = 7,
  SPIKERF_MAP_SMOOTH_SIGN = 8,
  SPIKERF_MAP_SQUARE = 9,
} SpikerfMap;

// Opaque handle to a theory problem.
typedef struct SpikerfProblem SpikerfProblem;

// Generalization error and order parameters at one ridge penalty.
//
// `tau0` and `tau1` point to caller-owned arrays of length `k`.
typedef struct SpikerfGenError {
  double error;
  double tau2;
  double tau3;
  double *tau0;
  double *tau1;
  size_t k;
} SpikerfGenError;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a problem from spike-vocabulary values `zeta_u[0..k]` with
// probabilities `pi[0..k]`.
//
// # Safety
// `zeta_u` and `pi` must point to `k` readable doubles and `out` to a
// writable handle slot.
enum SpikerfStatus spikerf_problem_new(double alpha,
                                       double beta,
                                       size_t k,
                                       const double *zeta_u,
                                       const double *pi,
                                       enum SpikerfMap activation,
                                       enum SpikerfMap link,
                                       struct SpikerfProblem **out);

// Creates a problem from an experiment configuration in JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable handle slot.
enum SpikerfStatus spikerf_problem_from_json(const char *json, struct SpikerfProblem **out);

// Releases a problem. Null is ignored.
//
// # Safety
// `problem` must come from a constructor of this library and not be used
// afterwards.
void spikerf_problem_free(struct SpikerfProblem *problem);

// Vocabulary size of a problem, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t spikerf_problem_k(const struct SpikerfProblem *problem);

// Bulk Stieltjes transform `m(z)` at `z = re + i·im`.
//
// # Safety
// `problem` must be a live handle; `out_re` and `out_im` must be writable.
enum SpikerfStatus spikerf_stieltjes(const struct SpikerfProblem *problem,
                                     double re,
                                     double im,
                                     double *out_re,
                                     double *out_im);

// Asymptotic generalization error at ridge penalty `lambda`.
//
// # Safety
// `problem` must be a live handle and `out` must point to a struct whose
// `tau0` and `tau1` arrays hold at least `out.k` doubles, with `out.k`
// equal to the vocabulary size.
enum SpikerfStatus spikerf_generror(const struct SpikerfProblem *problem,
                                    double lambda,
                                    struct SpikerfGenError *out);

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len − 1` bytes) and returns its full length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t spikerf_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *spikerf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKERF_H */
