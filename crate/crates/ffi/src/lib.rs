//! C API over `hyperstab`: load a scenario, validate it, synthesize, simulate and read back the
//! trajectory.
//!
//! Every object is an opaque handle released by its `_free` function. Calls return an
//! [`HsStatus`]; on failure [`hs_last_error`] describes the error raised on the calling thread.
//! Strings handed out by the library are released with [`hs_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hyperstab::cli::commands::check_assumptions;
use hyperstab::cli::{exit_code, Scenario, ScenarioConfig};
use hyperstab::sim::{fit_decay, run_closed_loop, Mode, Trajectory};
use hyperstab::synthesis::{FullSynthesis, SynthesisResult};
use hyperstab::Error;

/// Result of every fallible call. The first four values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    /// An assumption or certificate failed.
    AssumptionFailed = 1,
    /// Malformed input: configuration, mode, argument value or path.
    InvalidInput = 2,
    /// The simulation diverged; the truncated trajectory is still returned.
    Diverged = 3,
    NullPointer = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

pub const HS_MODE_OPEN_LOOP: u32 = 0;
pub const HS_MODE_STATE_FEEDBACK: u32 = 1;
pub const HS_MODE_OUTPUT_FEEDBACK: u32 = 2;

/// A loaded scenario.
pub struct HsScenario(Scenario);

/// A complete synthesis for one scenario.
pub struct HsSynthesis {
    syn: FullSynthesis,
    scenario: Scenario,
}

/// A recorded closed-loop run.
pub struct HsTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(err: Error) -> HsStatus {
    let status = match exit_code(&err) {
        1 => HsStatus::AssumptionFailed,
        _ => HsStatus::InvalidInput,
    };
    set_error(err.to_string());
    status
}

/// Runs `f`, turning panics into [`HsStatus::Internal`].
fn guard(f: impl FnOnce() -> HsStatus) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            HsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, HsStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(HsStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        HsStatus::InvalidInput
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, HsStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        HsStatus::NullPointer
    })
}

fn out_ptr<T>(out: *mut T) -> Result<(), HsStatus> {
    if out.is_null() {
        set_error("output pointer is null".into());
        Err(HsStatus::NullPointer)
    } else {
        Ok(())
    }
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> HsStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            HsStatus::Ok
        }
        Err(_) => {
            set_error("string contains an interior NUL".into());
            HsStatus::Internal
        }
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last error on this thread, or null. Valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scenario file; relative paths inside it resolve against its directory.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_load(path: *const c_char, out: *mut *mut HsScenario) -> HsStatus {
    guard(|| {
        let path = tri!(str_arg(path, "path"));
        tri!(out_ptr(out));
        match Scenario::load(Path::new(path)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(HsScenario(s)));
                HsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a scenario from JSON text; `base_dir` (may be null for ".") anchors relative paths.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut HsScenario,
) -> HsStatus {
    guard(|| {
        let json = tri!(str_arg(json, "json"));
        let base = if base_dir.is_null() { "." } else { tri!(str_arg(base_dir, "base_dir")) };
        tri!(out_ptr(out));
        let config: ScenarioConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => return fail(Error::Invalid(format!("scenario: {e}"))),
        };
        match Scenario::from_config(config, Path::new(base), "scenario") {
            Ok(s) => {
                *out = Box::into_raw(Box::new(HsScenario(s)));
                HsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_scenario_free(s: *mut HsScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Checks the three assumptions. Writes the JSON report to `report` (may be null) and returns
/// [`HsStatus::AssumptionFailed`] if any fails.
#[no_mangle]
pub unsafe extern "C" fn hs_validate(scn: *const HsScenario, report: *mut *mut c_char) -> HsStatus {
    guard(|| {
        let scn = tri!(handle(scn, "scenario"));
        let (rep, _) = match check_assumptions(&scn.0, None) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        if !report.is_null() {
            let json = serde_json::to_string_pretty(&rep).unwrap_or_default();
            let s = give_string(json, report);
            if s != HsStatus::Ok {
                return s;
            }
        }
        if rep.pass {
            HsStatus::Ok
        } else {
            set_error("an assumption failed; see the validate report".into());
            HsStatus::AssumptionFailed
        }
    })
}

/// Solves kernels, delay forms and both gain designs. `cache_dir` may be null.
#[no_mangle]
pub unsafe extern "C" fn hs_synthesize(
    scn: *const HsScenario,
    cache_dir: *const c_char,
    out: *mut *mut HsSynthesis,
) -> HsStatus {
    guard(|| {
        let scn = tri!(handle(scn, "scenario"));
        let cache = if cache_dir.is_null() { None } else { Some(Path::new(tri!(str_arg(cache_dir, "cache_dir")))) };
        tri!(out_ptr(out));
        let (rep, staged) = match check_assumptions(&scn.0, cache) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        if !rep.pass {
            set_error("an assumption failed; run hs_validate for the report".into());
            return HsStatus::AssumptionFailed;
        }
        match staged.finish(&scn.0.model, scn.0.options()) {
            Ok(syn) => {
                *out = Box::into_raw(Box::new(HsSynthesis {
                    syn,
                    scenario: scn.0.clone(),
                }));
                HsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_synthesis_free(s: *mut HsSynthesis) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// The synthesis record as JSON, including the scenario's configured filter if any.
#[no_mangle]
pub unsafe extern "C" fn hs_synthesis_json(syn: *const HsSynthesis, out: *mut *mut c_char) -> HsStatus {
    guard(|| {
        let s = tri!(handle(syn, "synthesis"));
        tri!(out_ptr(out));
        let filter = s.scenario.config.sim.filter.map(|f| (f, Vec::new()));
        give_string(SynthesisResult::new(&s.syn, filter, Vec::new()).to_json_string(), out)
    })
}

/// Simulates the scenario's configuration in `mode` (one of the `HS_MODE_*` values). Output
/// feedback needs the scenario to configure its filter. A divergent run still yields its
/// truncated trajectory along with [`HsStatus::Diverged`].
#[no_mangle]
pub unsafe extern "C" fn hs_simulate(syn: *const HsSynthesis, mode: u32, out: *mut *mut HsTrajectory) -> HsStatus {
    guard(|| {
        let s = tri!(handle(syn, "synthesis"));
        tri!(out_ptr(out));
        let mode = match mode {
            HS_MODE_OPEN_LOOP => Mode::OpenLoop,
            HS_MODE_STATE_FEEDBACK => Mode::StateFeedback,
            HS_MODE_OUTPUT_FEEDBACK => Mode::OutputFeedback,
            m => return fail(Error::Invalid(format!("unknown mode {m}"))),
        };
        let cfg = &s.scenario.config.sim;
        if mode == Mode::OutputFeedback && cfg.filter.is_none() {
            return fail(Error::Invalid("output feedback needs sim.filter in the scenario".into()));
        }
        match run_closed_loop(&s.syn, cfg, mode) {
            Ok(t) => {
                let diverged = t.diverged;
                *out = Box::into_raw(Box::new(HsTrajectory(t)));
                if diverged {
                    set_error("simulation diverged".into());
                    HsStatus::Diverged
                } else {
                    HsStatus::Ok
                }
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_free(t: *mut HsTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of recorded samples, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_len(t: *const HsTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.samples.len())
}

#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_diverged(t: *const HsTrajectory) -> bool {
    t.as_ref().is_some_and(|t| t.0.diverged)
}

unsafe fn copy_column(t: *const HsTrajectory, buf: *mut f64, len: usize, col: impl Fn(&Trajectory) -> Vec<f64>) -> HsStatus {
    guard(|| {
        let t = tri!(handle(t, "trajectory"));
        tri!(out_ptr(buf));
        let v = col(&t.0);
        if len < v.len() {
            set_error(format!("buffer holds {len} values, {} needed", v.len()));
            return HsStatus::InvalidInput;
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        HsStatus::Ok
    })
}

/// Copies the sample times into `buf`, which must hold [`hs_trajectory_len`] values.
#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_times(t: *const HsTrajectory, buf: *mut f64, len: usize) -> HsStatus {
    copy_column(t, buf, len, Trajectory::times)
}

/// Copies the state χ-norms into `buf`.
#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_chi_state(t: *const HsTrajectory, buf: *mut f64, len: usize) -> HsStatus {
    copy_column(t, buf, len, Trajectory::chi_state)
}

/// Copies the observer-error χ-norms into `buf` (NaN where no observer ran).
#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_chi_error(t: *const HsTrajectory, buf: *mut f64, len: usize) -> HsStatus {
    copy_column(t, buf, len, Trajectory::chi_error)
}

#[no_mangle]
pub unsafe extern "C" fn hs_trajectory_write_csv(t: *const HsTrajectory, path: *const c_char) -> HsStatus {
    guard(|| {
        let t = tri!(handle(t, "trajectory"));
        let path = tri!(str_arg(path, "path"));
        match t.0.write_csv(Path::new(path)) {
            Ok(()) => HsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Least-squares decay rate and `r²` of `ln χ` on `t ≥ t_start`.
#[no_mangle]
pub unsafe extern "C" fn hs_fit_decay(t: *const HsTrajectory, t_start: f64, rate: *mut f64, r2: *mut f64) -> HsStatus {
    guard(|| {
        let t = tri!(handle(t, "trajectory"));
        tri!(out_ptr(rate));
        tri!(out_ptr(r2));
        match fit_decay(&t.0, t_start) {
            Ok((a, b)) => {
                *rate = a;
                *r2 = b;
                HsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
