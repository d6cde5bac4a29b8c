//! C ABI over the qrepeater simulator.
//!
//! Every entry point returns a [`QrStatus`]. On failure a message is stored
//! per thread and can be read with [`qr_last_error_message`]. Results live
//! behind opaque handles that the caller releases with the matching `_free`
//! function; strings handed out by this library are released with
//! [`qr_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrepeater::chain::simulate_chain;
use qrepeater::config::RunConfig;
use qrepeater::io::LinkRecord;
use qrepeater::link::{run_link_exhaustive, LinkReport};
use qrepeater::verify::{run_verification, VerifyOptions};
use qrepeater::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration was rejected; the message names the key.
    ConfigError = 3,
    /// The simulation itself failed.
    SimulationError = 4,
    /// The verification suite ran and at least one check failed.
    VerificationFailed = 5,
    /// An internal panic was caught.
    Panic = 6,
}

/// Opaque result of an exhaustive link run.
pub struct QrLinkResult {
    report: LinkReport,
}

/// Scalar summary of a chain simulation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QrChainStats {
    pub trials: u64,
    pub completed: u64,
    pub timed_out: u64,
    pub link_acceptance: f64,
    pub mean_attempts: f64,
    pub attempts_std_error: f64,
    pub median_attempts: f64,
    pub rate: f64,
    pub fidelity_mean: f64,
    pub fidelity_min: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: QrStatus, msg: impl Into<String>) -> QrStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> QrStatus {
    let status = match e {
        Error::Config { .. } | Error::Parse(_) => QrStatus::ConfigError,
        _ => QrStatus::SimulationError,
    };
    fail(status, e.to_string())
}

/// Run `f`, turning a panic into [`QrStatus::Panic`].
fn guard(f: impl FnOnce() -> QrStatus) -> QrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(QrStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Parse an optional JSON run configuration; null means defaults.
///
/// # Safety
/// `json` is null or a NUL-terminated string.
unsafe fn parse_config(json: *const c_char) -> Result<RunConfig, QrStatus> {
    if json.is_null() {
        return Ok(RunConfig::default());
    }
    let text = CStr::from_ptr(json)
        .to_str()
        .map_err(|e| fail(QrStatus::InvalidUtf8, format!("configuration is not UTF-8: {e}")))?;
    RunConfig::from_json(text).map_err(from_error)
}

fn hand_out(s: String, out: *mut *mut c_char) -> QrStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: the caller checked `out` for null.
            unsafe { *out = c.into_raw() };
            QrStatus::Ok
        }
        Err(e) => fail(QrStatus::SimulationError, format!("output contains NUL: {e}")),
    }
}

/// Message of the last failed call on this thread, or null if the last
/// call succeeded. The pointer stays valid until the next call into this
/// library from the same thread.
#[no_mangle]
pub extern "C" fn qr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Exhaustive link run. `config_json` is a run configuration (null for
/// defaults); its `link` section is used.
///
/// # Safety
/// `config_json` is null or NUL-terminated; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_link_run(config_json: *const c_char, out: *mut *mut QrLinkResult) -> QrStatus {
    guard(|| {
        if out.is_null() {
            return fail(QrStatus::NullPointer, "`out` is null");
        }
        let config = match parse_config(config_json) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match run_link_exhaustive(&config.link) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(QrLinkResult { report }));
                QrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Probability that an attempt is heralded as a success.
///
/// # Safety
/// `result` comes from [`qr_link_run`] and is not yet freed; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn qr_link_result_acceptance(result: *const QrLinkResult, out: *mut f64) -> QrStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return fail(QrStatus::NullPointer, "null argument");
        }
        *out = (*result).report.acceptance_probability;
        QrStatus::Ok
    })
}

/// Full link record as JSON. Release the string with [`qr_string_free`].
///
/// # Safety
/// `result` comes from [`qr_link_run`] and is not yet freed; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn qr_link_result_to_json(result: *const QrLinkResult, out: *mut *mut c_char) -> QrStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return fail(QrStatus::NullPointer, "null argument");
        }
        let record = match LinkRecord::from_report(&(*result).report) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        match serde_json::to_string(&record) {
            Ok(s) => hand_out(s, out),
            Err(e) => fail(QrStatus::SimulationError, e.to_string()),
        }
    })
}

/// Release a link result. Null is ignored.
///
/// # Safety
/// `result` is null or comes from [`qr_link_run`] and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn qr_link_result_free(result: *mut QrLinkResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or was returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn qr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Monte Carlo chain simulation driven by the configuration's `link` and
/// `chain` sections.
///
/// # Safety
/// `config_json` is null or NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn qr_chain_simulate(
    config_json: *const c_char,
    seed: u64,
    trials: u64,
    out: *mut QrChainStats,
) -> QrStatus {
    guard(|| {
        if out.is_null() {
            return fail(QrStatus::NullPointer, "`out` is null");
        }
        let config = match parse_config(config_json) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let Ok(trials) = usize::try_from(trials) else {
            return fail(QrStatus::ConfigError, "`trials` does not fit in usize");
        };
        match simulate_chain(&config.chain_config(), seed, trials) {
            Ok(s) => {
                *out = QrChainStats {
                    trials: s.trials as u64,
                    completed: s.completed as u64,
                    timed_out: s.timed_out as u64,
                    link_acceptance: s.link_acceptance,
                    mean_attempts: s.mean_attempts,
                    attempts_std_error: s.attempts_std_error,
                    median_attempts: s.median_attempts,
                    rate: s.rate,
                    fidelity_mean: s.fidelity_mean,
                    fidelity_min: s.fidelity_min,
                };
                QrStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run the verification suite. Writes the text report to `report_out`
/// when it is non-null (release with [`qr_string_free`]). Returns
/// [`QrStatus::VerificationFailed`] if any check fails.
///
/// # Safety
/// `report_out` is null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_verify(seed: u64, report_out: *mut *mut c_char) -> QrStatus {
    guard(|| {
        let report = run_verification(&VerifyOptions {
            seed,
            ..VerifyOptions::default()
        });
        if !report_out.is_null() {
            let status = hand_out(report.to_string(), report_out);
            if status != QrStatus::Ok {
                return status;
            }
        }
        if report.all_passed() {
            QrStatus::Ok
        } else {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
            fail(QrStatus::VerificationFailed, format!("failed checks: {}", failed.join(", ")))
        }
    })
}
