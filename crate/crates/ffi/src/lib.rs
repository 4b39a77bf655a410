//! C ABI over the chart library.
//!
//! Every fallible function returns an [`MpcStatus`]; on failure the message
//! is available from [`mpc_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mpc_core::cli::{GroupCentering, ModelBundle};
use mpc_core::monitor::{MonitorSession, StepResult};
use mpc_core::MpcError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NotConverged = 4,
    NotPositiveDefinite = 5,
    Format = 6,
    Io = 7,
    Other = 8,
    Panic = 9,
}

impl From<&MpcError> for MpcStatus {
    fn from(e: &MpcError) -> Self {
        match e {
            MpcError::InvalidInput(_) => MpcStatus::InvalidInput,
            MpcError::DimensionMismatch(_) => MpcStatus::DimensionMismatch,
            MpcError::NotConverged { .. } => MpcStatus::NotConverged,
            MpcError::NotPositiveDefinite(_) => MpcStatus::NotPositiveDefinite,
            MpcError::Format(_) | MpcError::Json(_) | MpcError::Csv(_) => MpcStatus::Format,
            MpcError::Io(_) => MpcStatus::Io,
            _ => MpcStatus::Other,
        }
    }
}

/// A loaded model bundle.
pub struct MpcModel {
    bundle: ModelBundle,
    channels: Vec<CString>,
}

/// A Phase II monitoring session.
pub struct MpcMonitor {
    session: MonitorSession<'static>,
    centering: Option<GroupCentering>,
    last: Option<StepResult>,
}

/// Summary of one monitoring step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MpcStep {
    pub step_index: u64,
    pub lambda: f64,
    pub control_limit: f64,
    /// 1 when the chart signals.
    pub signal: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), MpcStatus>) -> MpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MpcStatus::Panic
        }
    }
}

fn fail(e: MpcError) -> MpcStatus {
    set_error(&e.to_string());
    MpcStatus::from(&e)
}

fn null(what: &str) -> MpcStatus {
    set_error(&format!("{what} is null"));
    MpcStatus::NullPointer
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, MpcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        MpcStatus::InvalidInput
    })
}

fn into_model(bundle: ModelBundle) -> Box<MpcModel> {
    let channels = bundle
        .channels
        .iter()
        .map(|c| CString::new(c.replace('\0', " ")).unwrap_or_default())
        .collect();
    Box::new(MpcModel { bundle, channels })
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn mpc_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread. Valid until the next call
/// into the library from the same thread.
#[no_mangle]
pub extern "C" fn mpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model bundle from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_load(path: *const c_char, out: *mut *mut MpcModel) -> MpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let b = ModelBundle::load(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(into_model(b));
        Ok(())
    })
}

/// Parses a model bundle from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_from_json(json: *const c_char, out: *mut *mut MpcModel) -> MpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = c_str(json, "json")?;
        let b = ModelBundle::from_json(text).map_err(fail)?;
        *out = Box::into_raw(into_model(b));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_free(model: *mut MpcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of channels, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_n_channels(model: *const MpcModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.channels.len())
}

/// Points per channel curve in a raw observation, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_n_points(model: *const MpcModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.raw_grid.len())
}

/// Number of sparsity levels, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_n_levels(model: *const MpcModel) -> usize {
    model.as_ref().map_or(0, |m| m.bundle.sparsity_levels.len())
}

/// Control limit `h`, or NaN for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_control_limit(model: *const MpcModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.bundle.refs.control_limit)
}

/// Label of channel `j`, owned by the model; null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_model_channel_name(model: *const MpcModel, j: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.channels.get(j))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Starts a monitoring session. The session keeps its own copy of the
/// model, which may be freed afterwards.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpc_monitor_new(model: *const MpcModel, out: *mut *mut MpcMonitor) -> MpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let session = m.bundle.chart().into_session().map_err(fail)?;
        *out = Box::into_raw(Box::new(MpcMonitor {
            session,
            centering: m.bundle.centering.clone(),
            last: None,
        }));
        Ok(())
    })
}

/// Feeds one raw observation: `len = channels × points` values, channel
/// after channel in model order. On error the session is unchanged.
///
/// # Safety
/// `monitor` must be a live handle, `values` must point to `len` doubles
/// and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn mpc_monitor_step(
    monitor: *mut MpcMonitor,
    values: *const f64,
    len: usize,
    out: *mut MpcStep,
) -> MpcStatus {
    guard(|| {
        let mon = monitor.as_mut().ok_or_else(|| null("monitor"))?;
        if values.is_null() {
            return Err(null("values"));
        }
        let mut obs = std::slice::from_raw_parts(values, len).to_vec();
        if let Some(c) = &mon.centering {
            if obs.len() % c.groups.len() != 0 {
                return Err(fail(MpcError::DimensionMismatch(format!(
                    "{} values do not split into {} channels",
                    obs.len(),
                    c.groups.len()
                ))));
            }
            c.apply(&mut obs);
        }
        let r = mon.session.step_raw(&obs).map_err(fail)?;
        if let Some(o) = out.as_mut() {
            *o = MpcStep {
                step_index: r.step_index as u64,
                lambda: r.lambda,
                control_limit: r.control_limit,
                signal: r.signal as i32,
            };
        }
        mon.last = Some(r);
        Ok(())
    })
}

/// Copies the last step's `Λₛ` (one per sparsity level) into `buf`.
///
/// # Safety
/// `monitor` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mpc_monitor_lambda_s(monitor: *const MpcMonitor, buf: *mut f64, len: usize) -> MpcStatus {
    guard(|| {
        let mon = monitor.as_ref().ok_or_else(|| null("monitor"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let r = mon
            .last
            .as_ref()
            .ok_or_else(|| fail(MpcError::InvalidInput("no step has been taken".into())))?;
        if len < r.lambda_s.len() {
            return Err(fail(MpcError::DimensionMismatch(format!(
                "buffer holds {len} values, {} needed",
                r.lambda_s.len()
            ))));
        }
        std::slice::from_raw_parts_mut(buf, r.lambda_s.len()).copy_from_slice(&r.lambda_s);
        Ok(())
    })
}

/// Steps taken so far, or 0 for a null handle.
///
/// # Safety
/// `monitor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpc_monitor_step_count(monitor: *const MpcMonitor) -> u64 {
    monitor.as_ref().map_or(0, |m| m.session.step_count() as u64)
}

/// # Safety
/// `monitor` must come from [`mpc_monitor_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mpc_monitor_free(monitor: *mut MpcMonitor) {
    if !monitor.is_null() {
        drop(Box::from_raw(monitor));
    }
}
