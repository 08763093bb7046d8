#ifndef TRAJPRED_H
#define TRAJPRED_H

/* Generated from the Rust ABI crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum TpStatus {
  // Success.
  TP_STATUS_OK = 0,
  // A required pointer argument was null.
  TP_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  TP_STATUS_INVALID_UTF8 = 2,
  // A file could not be read.
  TP_STATUS_IO = 3,
  // A file or string could not be parsed.
  TP_STATUS_PARSE = 4,
  // Arguments were structurally valid but semantically wrong
  // (unknown agent, bad parameter values, index out of range, ...).
  TP_STATUS_INVALID_INPUT = 5,
  // The prediction pipeline reported an error.
  TP_STATUS_PREDICTION = 6,
  // An internal invariant failed; the library caught a panic.
  TP_STATUS_INTERNAL = 7,
} TpStatus;

// Opaque trained maneuver classifier.
typedef struct TpModel TpModel;

// Opaque cost-model parameter set.
typedef struct TpParams TpParams;

// Opaque result of one prediction round for one agent.
typedef struct TpPrediction TpPrediction;

// Opaque driving context: lanes, obstacles, lights, scripted agents.
typedef struct TpScenario TpScenario;

// Opaque store of the previous round's predictions, used to anticipate
// moving obstacles. Reuse one state across successive rounds of the same
// scenario; create a fresh one per scenario.
typedef struct TpState TpState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the most recent failure on this thread. Never null;
// empty before the first failure. Valid until the next failing call on
// the same thread.
const char *tp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *tp_version(void);

// Load a scenario from a JSON file.
//
// # Safety
// `path` must be NUL-terminated; `out` must be a valid pointer.
enum TpStatus tp_scenario_load(const char *path, struct TpScenario **out);

// Parse a scenario from a JSON string.
//
// # Safety
// `json` must be NUL-terminated; `out` must be a valid pointer.
enum TpStatus tp_scenario_parse(const char *json, struct TpScenario **out);

// Release a scenario handle. Accepts null.
//
// # Safety
// `scenario` must be a handle from this library, released at most once.
void tp_scenario_free(struct TpScenario *scenario);

// Load a trained classifier from its JSON parameter dump.
//
// # Safety
// `path` must be NUL-terminated; `out` must be a valid pointer.
enum TpStatus tp_model_load(const char *path, struct TpModel **out);

// Release a model handle. Accepts null.
//
// # Safety
// `model` must be a handle from this library, released at most once.
void tp_model_free(struct TpModel *model);

// Built-in default parameters.
//
// # Safety
// `out` must be a valid pointer.
enum TpStatus tp_params_default(struct TpParams **out);

// Load parameters from a JSON file (same format as
// `config/default_params.json`; leading `#` header lines are ignored).
//
// # Safety
// `path` must be NUL-terminated; `out` must be a valid pointer.
enum TpStatus tp_params_load(const char *path, struct TpParams **out);

// Release a parameter handle. Accepts null.
//
// # Safety
// `params` must be a handle from this library, released at most once.
void tp_params_free(struct TpParams *params);

// Create an empty prediction state.
//
// # Safety
// `out` must be a valid pointer.
enum TpStatus tp_state_new(struct TpState **out);

// Release a prediction-state handle. Accepts null.
//
// # Safety
// `state` must be a handle from this library, released at most once.
void tp_state_free(struct TpState *state);

// Predict one agent's trajectory at epoch `t` seconds.
//
// `params` may be null (built-in defaults). `state` may be null (no
// previous round); when given, the result is recorded into it so the next
// round can anticipate this agent.
//
// # Safety
// All non-null pointers must be valid handles from this library; `out`
// must be a valid pointer.
enum TpStatus tp_predict(const struct TpScenario *scenario,
                         const struct TpModel *model,
                         const struct TpParams *params,
                         struct TpState *state,
                         int64_t target_id,
                         double t,
                         struct TpPrediction **out);

// Number of points in the predicted trajectory.
//
// # Safety
// `prediction` must be a valid handle.
size_t tp_prediction_len(const struct TpPrediction *prediction);

// Fetch point `index`; writes its absolute time and position.
//
// # Safety
// `prediction` must be a valid handle; non-null out-pointers must be
// valid.
enum TpStatus tp_prediction_point(const struct TpPrediction *prediction,
                                  size_t index,
                                  double *t,
                                  double *x,
                                  double *y);

// Static name of the anticipated policy ("forward", "turn_left", ...), or
// null when the pipeline fell back to the naive fit.
//
// # Safety
// `prediction` must be a valid handle.
const char *tp_prediction_policy_name(const struct TpPrediction *prediction);

// Whether the optimizer reported convergence.
//
// # Safety
// `prediction` must be a valid handle.
bool tp_prediction_converged(const struct TpPrediction *prediction);

// Accepted-step count the optimizer consumed.
//
// # Safety
// `prediction` must be a valid handle.
size_t tp_prediction_iterations(const struct TpPrediction *prediction);

// Final objective value (NaN for the naive-fit fallback).
//
// # Safety
// `prediction` must be a valid handle.
double tp_prediction_final_cost(const struct TpPrediction *prediction);

// Number of diagnostic warnings attached to the prediction.
//
// # Safety
// `prediction` must be a valid handle.
size_t tp_prediction_warning_count(const struct TpPrediction *prediction);

// Static name of warning `index` ("red_light_offence", "naive_fallback",
// "optimizer_aborted"), or null when out of range.
//
// # Safety
// `prediction` must be a valid handle.
const char *tp_prediction_warning(const struct TpPrediction *prediction, size_t index);

// Release a prediction handle. Accepts null.
//
// # Safety
// `prediction` must be a handle from this library, released at most once.
void tp_prediction_free(struct TpPrediction *prediction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJPRED_H */
