//! C ABI for the trajectory prediction engine.
//!
//! Conventions:
//! - Every constructor is status-returning with an out-parameter; on any
//!   status other than `TP_STATUS_OK` the out-parameter is left null.
//! - All handles are opaque and must be released with their `_free`
//!   function; `_free` accepts null.
//! - `tp_last_error_message` returns a thread-local, NUL-terminated
//!   description of the most recent failure on the calling thread; the
//!   pointer stays valid until the next failing call on that thread.
//! - String returns (`tp_version`, policy and warning names) are static
//!   and must not be freed.
//! - Handles are not synchronized; do not share one handle across threads
//!   without external locking. Distinct handles are independent.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use trajpred::cost::CostParams;
use trajpred::policy::RecurrentClassifier;
use trajpred::predictor::{predict, PredictionResult, PredictionState, PredictorConfig};
use trajpred::scenario::{parse_scenario, Scenario};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    /// Success.
    TpStatusOk = 0,
    /// A required pointer argument was null.
    TpStatusNullArgument = 1,
    /// A string argument was not valid UTF-8.
    TpStatusInvalidUtf8 = 2,
    /// A file could not be read.
    TpStatusIo = 3,
    /// A file or string could not be parsed.
    TpStatusParse = 4,
    /// Arguments were structurally valid but semantically wrong
    /// (unknown agent, bad parameter values, index out of range, ...).
    TpStatusInvalidInput = 5,
    /// The prediction pipeline reported an error.
    TpStatusPrediction = 6,
    /// An internal invariant failed; the library caught a panic.
    TpStatusInternal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Description of the most recent failure on this thread. Never null;
/// empty before the first failure. Valid until the next failing call on
/// the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn guard<F: FnOnce() -> TpStatus>(f: F) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal error: {msg}"));
            TpStatus::TpStatusInternal
        }
    }
}

/// # Safety
/// `path` must be a valid NUL-terminated string.
unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, TpStatus> {
    if path.is_null() {
        set_error("path is null");
        return Err(TpStatus::TpStatusNullArgument);
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(TpStatus::TpStatusInvalidUtf8)
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error(concat!($name, " is null"));
                return TpStatus::TpStatusNullArgument;
            }
        }
    };
}

macro_rules! nonnull_mut {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => {
                set_error(concat!($name, " is null"));
                return TpStatus::TpStatusNullArgument;
            }
        }
    };
}

// ---------------------------------------------------------------------------
// scenario
// ---------------------------------------------------------------------------

/// Opaque driving context: lanes, obstacles, lights, scripted agents.
pub struct TpScenario(Scenario);

/// Load a scenario from a JSON file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_scenario_load(
    path: *const c_char,
    out: *mut *mut TpScenario,
) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                set_error(&format!("read {}: {e}", path.display()));
                return TpStatus::TpStatusIo;
            }
        };
        match parse_scenario(&text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(TpScenario(s)));
                TpStatus::TpStatusOk
            }
            Err(e) => {
                set_error(&format!("parse {}: {e}", path.display()));
                TpStatus::TpStatusParse
            }
        }
    })
}

/// Parse a scenario from a JSON string.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_scenario_parse(
    json: *const c_char,
    out: *mut *mut TpScenario,
) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = ptr::null_mut();
        if json.is_null() {
            set_error("json is null");
            return TpStatus::TpStatusNullArgument;
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("json is not valid UTF-8");
                return TpStatus::TpStatusInvalidUtf8;
            }
        };
        match parse_scenario(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(TpScenario(s)));
                TpStatus::TpStatusOk
            }
            Err(e) => {
                set_error(&format!("parse scenario: {e}"));
                TpStatus::TpStatusParse
            }
        }
    })
}

/// Release a scenario handle. Accepts null.
///
/// # Safety
/// `scenario` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tp_scenario_free(scenario: *mut TpScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

/// Opaque trained maneuver classifier.
pub struct TpModel(RecurrentClassifier);

/// Load a trained classifier from its JSON parameter dump.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_model_load(
    path: *const c_char,
    out: *mut *mut TpModel,
) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match RecurrentClassifier::load(path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(TpModel(m)));
                TpStatus::TpStatusOk
            }
            Err(e) => {
                set_error(&format!("load model {}: {e}", path.display()));
                TpStatus::TpStatusParse
            }
        }
    })
}

/// Release a model handle. Accepts null.
///
/// # Safety
/// `model` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tp_model_free(model: *mut TpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

/// Opaque cost-model parameter set.
pub struct TpParams(CostParams);

/// Built-in default parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_params_default(out: *mut *mut TpParams) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = Box::into_raw(Box::new(TpParams(CostParams::default())));
        TpStatus::TpStatusOk
    })
}

/// Load parameters from a JSON file (same format as
/// `config/default_params.json`; leading `#` header lines are ignored).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_params_load(
    path: *const c_char,
    out: *mut *mut TpParams,
) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                set_error(&format!("read {}: {e}", path.display()));
                return TpStatus::TpStatusIo;
            }
        };
        let body = trajpred::scenario::strip_header_lines(&text);
        let params: CostParams = match serde_json::from_str(body) {
            Ok(p) => p,
            Err(e) => {
                set_error(&format!("parse {}: {e}", path.display()));
                return TpStatus::TpStatusParse;
            }
        };
        if let Err(e) = params.validate() {
            set_error(&format!("invalid parameters: {e}"));
            return TpStatus::TpStatusInvalidInput;
        }
        *out = Box::into_raw(Box::new(TpParams(params)));
        TpStatus::TpStatusOk
    })
}

/// Release a parameter handle. Accepts null.
///
/// # Safety
/// `params` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tp_params_free(params: *mut TpParams) {
    if !params.is_null() {
        drop(unsafe { Box::from_raw(params) });
    }
}

// ---------------------------------------------------------------------------
// prediction state
// ---------------------------------------------------------------------------

/// Opaque store of the previous round's predictions, used to anticipate
/// moving obstacles. Reuse one state across successive rounds of the same
/// scenario; create a fresh one per scenario.
pub struct TpState(PredictionState);

/// Create an empty prediction state.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_state_new(out: *mut *mut TpState) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = Box::into_raw(Box::new(TpState(PredictionState::new())));
        TpStatus::TpStatusOk
    })
}

/// Release a prediction-state handle. Accepts null.
///
/// # Safety
/// `state` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tp_state_free(state: *mut TpState) {
    if !state.is_null() {
        drop(unsafe { Box::from_raw(state) });
    }
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

/// Opaque result of one prediction round for one agent.
pub struct TpPrediction(PredictionResult);

/// Predict one agent's trajectory at epoch `t` seconds.
///
/// `params` may be null (built-in defaults). `state` may be null (no
/// previous round); when given, the result is recorded into it so the next
/// round can anticipate this agent.
///
/// # Safety
/// All non-null pointers must be valid handles from this library; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_predict(
    scenario: *const TpScenario,
    model: *const TpModel,
    params: *const TpParams,
    state: *mut TpState,
    target_id: i64,
    t: f64,
    out: *mut *mut TpPrediction,
) -> TpStatus {
    guard(|| {
        let out = nonnull_mut!(out, "out");
        *out = ptr::null_mut();
        let scenario = nonnull!(scenario, "scenario");
        let model = nonnull!(model, "model");
        let mut cfg = PredictorConfig {
            observation_frames: model.0.t_obs(),
            ..PredictorConfig::default()
        };
        if let Some(p) = unsafe { params.as_ref() } {
            cfg.params = p.0.clone();
        }
        let mut scratch = PredictionState::new();
        let state_ref = match unsafe { state.as_mut() } {
            Some(s) => &mut s.0,
            None => &mut scratch,
        };
        let previous = state_ref.clone();
        match predict(&scenario.0, &model.0, target_id, t, &previous, &cfg) {
            Ok(result) => {
                state_ref.record(target_id, result.trajectory.clone());
                *out = Box::into_raw(Box::new(TpPrediction(result)));
                TpStatus::TpStatusOk
            }
            Err(e) => {
                set_error(&format!("predict agent {target_id} at t={t}: {e}"));
                TpStatus::TpStatusPrediction
            }
        }
    })
}

/// Number of points in the predicted trajectory.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_len(prediction: *const TpPrediction) -> usize {
    match unsafe { prediction.as_ref() } {
        Some(p) => p.0.trajectory.len(),
        None => 0,
    }
}

/// Fetch point `index`; writes its absolute time and position.
///
/// # Safety
/// `prediction` must be a valid handle; non-null out-pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_point(
    prediction: *const TpPrediction,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    y: *mut f64,
) -> TpStatus {
    guard(|| {
        let p = nonnull!(prediction, "prediction");
        if index >= p.0.trajectory.len() {
            set_error(&format!(
                "point index {index} out of range ({} points)",
                p.0.trajectory.len()
            ));
            return TpStatus::TpStatusInvalidInput;
        }
        let point = p.0.trajectory.point(index);
        if let Some(t) = unsafe { t.as_mut() } {
            *t = p.0.trajectory.time(index);
        }
        if let Some(x) = unsafe { x.as_mut() } {
            *x = point.x;
        }
        if let Some(y) = unsafe { y.as_mut() } {
            *y = point.y;
        }
        TpStatus::TpStatusOk
    })
}

/// Static name of the anticipated policy ("forward", "turn_left", ...), or
/// null when the pipeline fell back to the naive fit.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_policy_name(
    prediction: *const TpPrediction,
) -> *const c_char {
    let Some(p) = (unsafe { prediction.as_ref() }) else {
        return ptr::null();
    };
    match p.0.policy {
        Some(label) => match label.name() {
            "forward" => c"forward".as_ptr(),
            "yield" => c"yield".as_ptr(),
            "turn_left" => c"turn_left".as_ptr(),
            "turn_right" => c"turn_right".as_ptr(),
            "lane_change_left" => c"lane_change_left".as_ptr(),
            _ => c"lane_change_right".as_ptr(),
        },
        None => ptr::null(),
    }
}

/// Whether the optimizer reported convergence.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_converged(prediction: *const TpPrediction) -> bool {
    unsafe { prediction.as_ref() }.map(|p| p.0.converged).unwrap_or(false)
}

/// Accepted-step count the optimizer consumed.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_iterations(prediction: *const TpPrediction) -> usize {
    unsafe { prediction.as_ref() }.map(|p| p.0.iterations).unwrap_or(0)
}

/// Final objective value (NaN for the naive-fit fallback).
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_final_cost(prediction: *const TpPrediction) -> f64 {
    unsafe { prediction.as_ref() }.map(|p| p.0.final_cost).unwrap_or(f64::NAN)
}

/// Number of diagnostic warnings attached to the prediction.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_warning_count(
    prediction: *const TpPrediction,
) -> usize {
    unsafe { prediction.as_ref() }.map(|p| p.0.warnings.len()).unwrap_or(0)
}

/// Static name of warning `index` ("red_light_offence", "naive_fallback",
/// "optimizer_aborted"), or null when out of range.
///
/// # Safety
/// `prediction` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_warning(
    prediction: *const TpPrediction,
    index: usize,
) -> *const c_char {
    let Some(p) = (unsafe { prediction.as_ref() }) else {
        return ptr::null();
    };
    match p.0.warnings.iter().nth(index).map(|w| w.as_str()) {
        Some("red_light_offence") => c"red_light_offence".as_ptr(),
        Some("naive_fallback") => c"naive_fallback".as_ptr(),
        Some("optimizer_aborted") => c"optimizer_aborted".as_ptr(),
        _ => ptr::null(),
    }
}

/// Release a prediction handle. Accepts null.
///
/// # Safety
/// `prediction` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tp_prediction_free(prediction: *mut TpPrediction) {
    if !prediction.is_null() {
        drop(unsafe { Box::from_raw(prediction) });
    }
}
