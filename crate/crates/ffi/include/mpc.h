#ifndef MPC_H
#define MPC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpcStatus {
  MPC_STATUS_OK = 0,
  MPC_STATUS_NULL_POINTER = 1,
  MPC_STATUS_INVALID_INPUT = 2,
  MPC_STATUS_DIMENSION_MISMATCH = 3,
  MPC_STATUS_NOT_CONVERGED = 4,
  MPC_STATUS_NOT_POSITIVE_DEFINITE = 5,
  MPC_STATUS_FORMAT = 6,
  MPC_STATUS_IO = 7,
  MPC_STATUS_OTHER = 8,
  MPC_STATUS_PANIC = 9,
} MpcStatus;

// A loaded model bundle.
typedef struct MpcModel MpcModel;

// A Phase II monitoring session.
typedef struct MpcMonitor MpcMonitor;

// Summary of one monitoring step.
typedef struct MpcStep {
  uint64_t step_index;
  double lambda;
  double control_limit;
  // 1 when the chart signals.
  int32_t signal;
} MpcStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, NUL-terminated, static.
const char *mpc_version(void);

// Message of the last failure on this thread. Valid until the next call
// into the library from the same thread.
const char *mpc_last_error(void);

// Loads a model bundle from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MpcStatus mpc_model_load(const char *path, struct MpcModel **out);

// Parses a model bundle from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum MpcStatus mpc_model_from_json(const char *json, struct MpcModel **out);

// # Safety
// `model` must come from a load function and not be used afterwards.
void mpc_model_free(struct MpcModel *model);

// Number of channels, or 0 for a null model.
//
// # Safety
// `model` must be null or a live handle.
size_t mpc_model_n_channels(const struct MpcModel *model);

// Points per channel curve in a raw observation, or 0 for a null model.
//
// # Safety
// `model` must be null or a live handle.
size_t mpc_model_n_points(const struct MpcModel *model);

// Number of sparsity levels, or 0 for a null model.
//
// # Safety
// `model` must be null or a live handle.
size_t mpc_model_n_levels(const struct MpcModel *model);

// Control limit `h`, or NaN for a null model.
//
// # Safety
// `model` must be null or a live handle.
double mpc_model_control_limit(const struct MpcModel *model);

// Label of channel `j`, owned by the model; null when out of range.
//
// # Safety
// `model` must be null or a live handle.
const char *mpc_model_channel_name(const struct MpcModel *model, size_t j);

// Starts a monitoring session. The session keeps its own copy of the
// model, which may be freed afterwards.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum MpcStatus mpc_monitor_new(const struct MpcModel *model, struct MpcMonitor **out);

// Feeds one raw observation: `len = channels × points` values, channel
// after channel in model order. On error the session is unchanged.
//
// # Safety
// `monitor` must be a live handle, `values` must point to `len` doubles
// and `out` must be null or valid.
enum MpcStatus mpc_monitor_step(struct MpcMonitor *monitor,
                                const double *values,
                                size_t len,
                                struct MpcStep *out);

// Copies the last step's `Λₛ` (one per sparsity level) into `buf`.
//
// # Safety
// `monitor` must be a live handle and `buf` must hold `len` doubles.
enum MpcStatus mpc_monitor_lambda_s(const struct MpcMonitor *monitor, double *buf, size_t len);

// Steps taken so far, or 0 for a null handle.
//
// # Safety
// `monitor` must be null or a live handle.
uint64_t mpc_monitor_step_count(const struct MpcMonitor *monitor);

// # Safety
// `monitor` must come from [`mpc_monitor_new`] and not be used afterwards.
void mpc_monitor_free(struct MpcMonitor *monitor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPC_H */
