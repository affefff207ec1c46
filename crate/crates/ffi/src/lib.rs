//! C interface to restlink.
//!
//! Handles are opaque pointers owned by the caller and released with the matching
//! `*_free` function. Every fallible call returns an [`RlStatus`]; on failure
//! [`rl_last_error`] describes what went wrong on the calling thread. Strings
//! returned through out-parameters are NUL-terminated UTF-8 and must be released
//! with [`rl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use restlink::api_model::TestCase;
use restlink::search::{run_search, Algorithm, Budget, RunResult, SearchConfig};
use restlink::stats::{vargha_delaney_a12, wilcoxon_rank_sum};
use restlink::sut::simulated::SimulatedSut;
use restlink::sut::Sut;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Scenario = 4,
    Search = 5,
    Stats = 6,
    Panic = 7,
}

/// A simulated service loaded from a scenario document.
pub struct RlScenario(SimulatedSut);

/// The outcome of one search run.
pub struct RlRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(RlStatus, String);

impl Failure {
    fn new(status: RlStatus, message: impl ToString) -> Self {
        Failure(status, message.to_string())
    }
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RlStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("panic inside restlink");
            RlStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::new(
            RlStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(RlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::new(
            RlStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a valid, writable pointer
    unsafe { p.as_mut() }
        .ok_or_else(|| Failure::new(RlStatus::NullPointer, format!("{what} is null")))
}

fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles were created by this library and not yet freed
    unsafe { p.as_ref() }
        .ok_or_else(|| Failure::new(RlStatus::NullPointer, format!("{what} is null")))
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(RlStatus::InvalidArgument, "string contains NUL"))
}

/// Message of the last failed call on this thread; empty after a successful call.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn rl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_scenario` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scenario_from_json(
    json: *const c_char,
    out_scenario: *mut *mut RlScenario,
) -> RlStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        *slot = ptr::null_mut();
        let sut = SimulatedSut::from_json(text(json, "json")?)
            .map_err(|e| Failure::new(RlStatus::Scenario, e))?;
        *slot = Box::into_raw(Box::new(RlScenario(sut)));
        Ok(())
    })
}

/// Loads a scenario document from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_scenario` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scenario_load(
    path: *const c_char,
    out_scenario: *mut *mut RlScenario,
) -> RlStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        *slot = ptr::null_mut();
        let sut = SimulatedSut::load(text(path, "path")?)
            .map_err(|e| Failure::new(RlStatus::Scenario, e))?;
        *slot = Box::into_raw(Box::new(RlScenario(sut)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_scenario_free(scenario: *mut RlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of coverage targets of the scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out_count` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scenario_target_count(
    scenario: *const RlScenario,
    out_count: *mut usize,
) -> RlStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        *out(out_count, "out_count")? = s.0.targets().len();
        Ok(())
    })
}

/// Resets the service and executes one test given as a JSON array of statements.
/// Writes the execution result as JSON.
///
/// # Safety
/// `scenario` must be a live handle not shared with another thread, `test_json` a
/// NUL-terminated string and `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scenario_execute(
    scenario: *mut RlScenario,
    test_json: *const c_char,
    out_json: *mut *mut c_char,
) -> RlStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        let s = out(scenario, "scenario")?;
        let test: TestCase = serde_json::from_str(text(test_json, "test_json")?)
            .map_err(|e| Failure::new(RlStatus::InvalidArgument, format!("bad test: {e}")))?;
        s.0.reset();
        let result =
            s.0.execute(&test)
                .map_err(|e| Failure::new(RlStatus::Scenario, e))?;
        let json =
            serde_json::to_string(&result).map_err(|e| Failure::new(RlStatus::Scenario, e))?;
        *slot = c_string(json)?;
        Ok(())
    })
}

/// Runs one search with default parameters on a copy of the scenario.
/// `algorithm` is one of `lt-mosa`, `mosa` or `mio`.
///
/// # Safety
/// `scenario` must be a live handle, `algorithm` a NUL-terminated string and
/// `out_run` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_search_run(
    scenario: *const RlScenario,
    algorithm: *const c_char,
    evaluations: u64,
    seed: u64,
    out_run: *mut *mut RlRun,
) -> RlStatus {
    guard(|| {
        let slot = out(out_run, "out_run")?;
        *slot = ptr::null_mut();
        let s = handle(scenario, "scenario")?;
        let algorithm: Algorithm = text(algorithm, "algorithm")?
            .parse()
            .map_err(|e| Failure::new(RlStatus::InvalidArgument, e))?;
        let config = SearchConfig::new(algorithm, Budget::Evaluations(evaluations), seed);
        let run =
            run_search(&config, &mut s.0.clone()).map_err(|e| Failure::new(RlStatus::Search, e))?;
        *slot = Box::into_raw(Box::new(RlRun(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_run_free(run: *mut RlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of targets covered by the run's archive.
///
/// # Safety
/// `run` must be a live handle and `out_count` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_run_covered_count(
    run: *const RlRun,
    out_count: *mut usize,
) -> RlStatus {
    guard(|| {
        *out(out_count, "out_count")? = handle(run, "run")?.0.covered_count();
        Ok(())
    })
}

/// Number of distinct faults seen during the run.
///
/// # Safety
/// `run` must be a live handle and `out_count` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_run_fault_count(run: *const RlRun, out_count: *mut usize) -> RlStatus {
    guard(|| {
        *out(out_count, "out_count")? = handle(run, "run")?.0.faults_seen.len();
        Ok(())
    })
}

/// The generated suite as a JSON array of `{test, covered, faults}` entries.
///
/// # Safety
/// `run` must be a live handle and `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_run_suite_json(
    run: *const RlRun,
    out_json: *mut *mut c_char,
) -> RlStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        let suite = handle(run, "run")?.0.suite();
        let json = serde_json::to_string(&suite).map_err(|e| Failure::new(RlStatus::Search, e))?;
        *slot = c_string(json)?;
        Ok(())
    })
}

/// Two-sided Wilcoxon rank-sum p-value of samples `a` and `b`.
///
/// # Safety
/// `a` and `b` must point to `a_len` and `b_len` readable doubles; `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_wilcoxon(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    out_p: *mut f64,
) -> RlStatus {
    guard(|| {
        let p = wilcoxon_rank_sum(slice(a, a_len, "a")?, slice(b, b_len, "b")?)
            .map_err(|e| Failure::new(RlStatus::Stats, e))?;
        *out(out_p, "out_p")? = p;
        Ok(())
    })
}

/// Vargha-Delaney effect size: probability that a value of `a` exceeds one of `b`.
///
/// # Safety
/// `a` and `b` must point to `a_len` and `b_len` readable doubles; `out_a12` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_a12(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    out_a12: *mut f64,
) -> RlStatus {
    guard(|| {
        let v = vargha_delaney_a12(slice(a, a_len, "a")?, slice(b, b_len, "b")?)
            .map_err(|e| Failure::new(RlStatus::Stats, e))?;
        *out(out_a12, "out_a12")? = v;
        Ok(())
    })
}
