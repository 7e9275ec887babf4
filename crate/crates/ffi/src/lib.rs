//! C ABI over the simulator.
//!
//! Every fallible call returns a [`B92Status`]; on failure the message is
//! available from [`b92_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use b92sim::analysis::Strategy;
use b92sim::config::B92Config as Config;
use b92sim::protocol::{self, RunOutput};
use b92sim::{cli, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum B92Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Infeasible = 4,
    Io = 5,
    Simulation = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum B92Channel {
    Herald = 0,
    D0 = 1,
    D1 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum B92Strategy {
    A = 0,
    B = 1,
}

/// Window markers in ps of detection delay, half-open.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct B92Windows {
    pub l1: i64,
    pub r1: i64,
    pub l2: i64,
    pub r2: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct B92Metrics {
    pub key_rate_khz: f64,
    pub qber_pct: f64,
    pub asymmetry_pct: f64,
    pub key_length: u64,
    pub windows: B92Windows,
}

/// Loaded run configuration.
pub struct B92Config(Config);

/// Tag streams of one simulated run.
pub struct B92Run(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> B92Status {
    match e {
        Error::ConfigParse { .. } | Error::ConfigInvalid(_) => B92Status::Config,
        Error::Infeasible(_) => B92Status::Infeasible,
        Error::Io { .. } | Error::Format { .. } => B92Status::Io,
        Error::InvalidParameter { .. } => B92Status::InvalidArgument,
        _ => B92Status::Simulation,
    }
}

struct Fail(B92Status, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(B92Status::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> B92Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            B92Status::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("panic: {}", msg.unwrap_or_else(|| "unknown".into())));
            B92Status::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(B92Status::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn b92_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads and validates a TOML run configuration.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b92_config_load(path: *const c_char, out: *mut *mut B92Config) -> B92Status {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let cfg = cli::load_config(&path_arg(path, "path")?, None)?;
        *out = Box::into_raw(Box::new(B92Config(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`b92_config_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn b92_config_free(cfg: *mut B92Config) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Overrides the master seed, run length and iteration count. A zero
/// `iterations` or a negative `duration_s` leaves that field unchanged.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn b92_config_set_run(cfg: *mut B92Config, seed: u64, duration_s: f64, iterations: usize) -> B92Status {
    guard(|| {
        let cfg = borrow_mut(cfg, "cfg")?;
        let mut run = cfg.0.file.run.clone();
        run.seed = seed;
        if duration_s >= 0.0 {
            run.duration_s = duration_s;
        }
        if iterations > 0 {
            run.iterations = iterations;
        }
        let mut file = cfg.0.file.clone();
        file.run = run;
        file.validate().map_err(Error::ConfigInvalid)?;
        cfg.0.file = file;
        Ok(())
    })
}

/// Simulates one run with the given seed.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b92_run(cfg: *const B92Config, seed: u64, out: *mut *mut B92Run) -> B92Status {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = ptr::null_mut();
        let cfg = borrow(cfg, "cfg")?;
        let run = protocol::run_b92(&cfg.0, seed)?;
        *out = Box::into_raw(Box::new(B92Run(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`b92_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn b92_run_free(run: *mut B92Run) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Borrows one channel's time tags (ps, strictly increasing). The array
/// lives as long as `run`.
///
/// # Safety
/// `run` must be a live handle; `tags` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b92_run_tags(run: *const B92Run, channel: B92Channel, tags: *mut *const u64, len: *mut usize) -> B92Status {
    guard(|| {
        let run = borrow(run, "run")?;
        let (tags, len) = (borrow_mut(tags, "tags")?, borrow_mut(len, "len")?);
        let s = match channel {
            B92Channel::Herald => &run.0.alice_herald,
            B92Channel::D0 => &run.0.bob_d0,
            B92Channel::D1 => &run.0.bob_d1,
        };
        *tags = s.tags().as_ptr();
        *len = s.len();
        Ok(())
    })
}

/// Run length in ps.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn b92_run_duration_ps(run: *const B92Run) -> u64 {
    run.as_ref().map_or(0, |r| r.0.alice_herald.duration())
}

/// Optimises the coincidence windows of a run and reports the sifted key.
///
/// # Safety
/// `cfg` and `run` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b92_run_analyze(cfg: *const B92Config, run: *const B92Run, strategy: B92Strategy, out: *mut B92Metrics) -> B92Status {
    guard(|| {
        let (cfg, run, out) = (borrow(cfg, "cfg")?, borrow(run, "run")?, borrow_mut(out, "out")?);
        let s = match strategy {
            B92Strategy::A => Strategy::A,
            B92Strategy::B => Strategy::B,
        };
        let r = protocol::analyze(&cfg.0, &protocol::histograms(&cfg.0, &run.0), s)?;
        let w = r.windows_ps;
        *out = B92Metrics {
            key_rate_khz: r.metrics.key_rate_khz,
            qber_pct: r.metrics.qber_pct,
            asymmetry_pct: r.metrics.asymmetry_pct,
            key_length: r.metrics.key_length,
            windows: B92Windows { l1: w.w_l1, r1: w.w_r1, l2: w.w_l2, r2: w.w_r2 },
        };
        Ok(())
    })
}

/// Runs the configured batch with both strategies and returns the summary
/// as JSON. Release the string with [`b92_string_free`].
///
/// # Safety
/// `cfg` must be a live handle; `json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn b92_simulate_summary(cfg: *const B92Config, json: *mut *mut c_char) -> B92Status {
    guard(|| {
        let json = borrow_mut(json, "json")?;
        *json = ptr::null_mut();
        let cfg = borrow(cfg, "cfg")?;
        let summary = cli::simulate_summary(&cfg.0, &[Strategy::A, Strategy::B], None, false)?;
        *json = CString::new(summary.to_json()).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn b92_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Phase-matching temperature (°C) of a crystal data file.
///
/// # Safety
/// `crystal_path` must be a NUL-terminated string; `temperature_c` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn b92_phase_match_temperature(crystal_path: *const c_char, pump_nm: f64, length_mm: f64, temperature_c: *mut f64) -> B92Status {
    guard(|| {
        let out = borrow_mut(temperature_c, "temperature_c")?;
        let args = cli::PhaseMatchArgs { crystal: path_arg(crystal_path, "crystal_path")?, pump_nm, length_mm, out: None };
        *out = cli::cmd_phase_match(&args, &mut std::io::sink())?.temperature_c;
        Ok(())
    })
}
