//! C ABI over the scenario runner and trace checkers.
//!
//! Handles are opaque and owned by the caller once returned; free each with
//! its `_free` function. Every call returns a [`TurtlesStatus`]. On any status
//! other than `Ok`, [`turtles_last_error`] describes the failure on the
//! calling thread. Strings returned through `char **` out-parameters are
//! NUL-terminated UTF-8 and must be released with [`turtles_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use turtles::cli::report_exit_code;
use turtles::harness::{check_trace, run_scenario, CheckReport, ConfigError, ScenarioConfig, SpecFamily};
use turtles::trace::Trace;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurtlesStatus {
    Ok = 0,
    /// A checked property failed.
    PropertyViolation = 1,
    /// The scenario is malformed or violates a configuration rule.
    ConfigError = 2,
    /// A processor or checker hit an internal invariant error.
    InternalInvariant = 3,
    /// A null pointer or non-UTF-8 string was passed.
    InvalidArgument = 4,
    /// A trace could not be parsed.
    ParseError = 5,
    /// The run hit its event budget before quiescence.
    Truncated = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

pub struct TurtlesConfig(ScenarioConfig);

pub struct TurtlesTrace(Trace);

pub struct TurtlesReport(CheckReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("NULs were replaced")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TurtlesStatus, String);

impl Failure {
    fn arg(msg: &str) -> Self {
        Failure(TurtlesStatus::InvalidArgument, msg.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure(TurtlesStatus::ConfigError, e.to_string())
    }
}

/// Runs `body`, translating failures and panics into a status.
fn guard(body: impl FnOnce() -> Result<TurtlesStatus, Failure>) -> TurtlesStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TurtlesStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::arg(&format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(&format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::arg(&format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::arg(&format!("{name} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs were replaced").into_raw()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn turtles_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn turtles_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario from JSON and validates it. With `violate_model` set,
/// fault counts beyond the tolerated bound are accepted and runs are marked
/// model-violating.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_config_from_json(
    json: *const c_char,
    violate_model: bool,
    out: *mut *mut TurtlesConfig,
) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let mut cfg = ScenarioConfig::parse(str_arg(json, "json")?)?;
        cfg.violate_model |= violate_model;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(TurtlesConfig(cfg)));
        Ok(TurtlesStatus::Ok)
    })
}

/// Replaces the scenario's seed.
///
/// # Safety
/// `cfg` must be a live handle from [`turtles_config_from_json`].
#[no_mangle]
pub unsafe extern "C" fn turtles_config_set_seed(cfg: *mut TurtlesConfig, seed: u64) -> TurtlesStatus {
    guard(|| {
        out_arg(cfg, "cfg")?.0.seed = seed;
        Ok(TurtlesStatus::Ok)
    })
}

/// The scenario as canonical JSON.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_config_to_json(cfg: *const TurtlesConfig, out: *mut *mut c_char) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(handle(cfg, "cfg")?.0.to_json());
        Ok(TurtlesStatus::Ok)
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn turtles_config_free(cfg: *mut TurtlesConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the scenario. The trace is stored in `out` whenever the status is
/// `Ok`, `Truncated`, or `InternalInvariant`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_run(cfg: *const TurtlesConfig, out: *mut *mut TurtlesTrace) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let outcome = run_scenario(&handle(cfg, "cfg")?.0)?;
        *out = Box::into_raw(Box::new(TurtlesTrace(outcome.trace)));
        if let Some(f) = outcome.fatal {
            return Err(Failure(TurtlesStatus::InternalInvariant, f));
        }
        if outcome.truncated {
            return Err(Failure(TurtlesStatus::Truncated, "run truncated by the event budget".into()));
        }
        Ok(TurtlesStatus::Ok)
    })
}

/// Parses a JSON-lines trace.
///
/// # Safety
/// `jsonl` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_trace_from_jsonl(jsonl: *const c_char, out: *mut *mut TurtlesTrace) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let trace = Trace::from_jsonl(str_arg(jsonl, "jsonl")?)
            .map_err(|e| Failure(TurtlesStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(TurtlesTrace(trace)));
        Ok(TurtlesStatus::Ok)
    })
}

/// Serializes the trace as JSON lines.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_trace_to_jsonl(trace: *const TurtlesTrace, out: *mut *mut c_char) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(handle(trace, "trace")?.0.to_jsonl());
        Ok(TurtlesStatus::Ok)
    })
}

/// Hex SHA-256 of the canonical trace.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_trace_hash(trace: *const TurtlesTrace, out: *mut *mut c_char) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(handle(trace, "trace")?.0.hash());
        Ok(TurtlesStatus::Ok)
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn turtles_trace_event_count(trace: *const TurtlesTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.events.len())
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn turtles_trace_free(trace: *mut TurtlesTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Checks a trace. `families` is a comma-separated list of `smr`, `turtle`,
/// `bft`, or null for the families matching the trace's scenario. The report
/// is stored in `out` whenever checking completed, and the status is `Ok`,
/// `PropertyViolation`, or `InternalInvariant` according to its verdict.
///
/// # Safety
/// `trace` must be a live handle, `families` null or a valid string, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_check(
    trace: *const TurtlesTrace,
    families: *const c_char,
    out: *mut *mut TurtlesReport,
) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let trace = handle(trace, "trace")?;
        let selected: Option<Vec<SpecFamily>> = if families.is_null() {
            None
        } else {
            let list = str_arg(families, "families")?;
            Some(
                list.split(',')
                    .map(|f| f.trim().parse::<SpecFamily>().map_err(|e| Failure::arg(&e.to_string())))
                    .collect::<Result<_, _>>()?,
            )
        };
        let report = check_trace(&trace.0, selected.as_deref())
            .map_err(|e| Failure(TurtlesStatus::ParseError, e.to_string()))?;
        let status = report_status(&report);
        let failed: Vec<String> = report.violations().map(|p| p.name.clone()).collect();
        *out = Box::into_raw(Box::new(TurtlesReport(report)));
        match status {
            TurtlesStatus::Ok => Ok(status),
            s => Err(Failure(s, format!("failed: {}", failed.join(", ")))),
        }
    })
}

fn report_status(report: &CheckReport) -> TurtlesStatus {
    match report_exit_code(report) {
        0 => TurtlesStatus::Ok,
        3 => TurtlesStatus::InternalInvariant,
        _ => TurtlesStatus::PropertyViolation,
    }
}

/// The report's verdict, as [`turtles_check`] returned it.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn turtles_report_status(report: *const TurtlesReport) -> TurtlesStatus {
    match report.as_ref() {
        Some(r) => report_status(&r.0),
        None => TurtlesStatus::InvalidArgument,
    }
}

/// Number of gating properties that failed, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn turtles_report_violation_count(report: *const TurtlesReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.violations().count())
}

/// The full report as JSON.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn turtles_report_to_json(report: *const TurtlesReport, out: *mut *mut c_char) -> TurtlesStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(handle(report, "report")?.0.to_json());
        Ok(TurtlesStatus::Ok)
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn turtles_report_free(report: *mut TurtlesReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn turtles_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_rejected() {
        let mut cfg = ptr::null_mut();
        let st = unsafe { turtles_config_from_json(ptr::null(), false, &mut cfg) };
        assert_eq!(st, TurtlesStatus::InvalidArgument);
        assert!(cfg.is_null());
        let msg = unsafe { CStr::from_ptr(turtles_last_error()) }.to_str().unwrap();
        assert!(msg.contains("json is null"));
        let st = unsafe { turtles_run(ptr::null(), ptr::null_mut()) };
        assert_eq!(st, TurtlesStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_a_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, TurtlesStatus::Panic);
        let msg = unsafe { CStr::from_ptr(turtles_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(guard(|| Ok(TurtlesStatus::Ok)), TurtlesStatus::Ok);
        assert!(turtles_last_error().is_null());
    }
}
