// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! C interface. Testcases and reports cross the boundary as opaque handles;
//! every fallible call returns a `TwinsStatus` and leaves a message for
//! `twins_last_error` on failure. Strings handed out must be released with
//! `twins_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use twins_forge::executor::{
    execute, replay_attack, AttackName, ChainedBftAdapter, RunLog, RunLogError, RunOutput, SimOptions, TestCase,
    Verdict,
};
use twins_forge::generator::{dry_run_stats, GeneratorConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwinsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidInput = 4,
    UnknownAttack = 5,
    Io = 6,
    Diverged = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwinsVerdict {
    Safe = 0,
    SafetyViolation = 1,
    LivenessViolation = 2,
    Inconclusive = 3,
}

/// A validated testcase.
pub struct TwinsTestCase {
    inner: TestCase,
}

/// The outcome of one execution or attack replay.
pub struct TwinsReport {
    run: RunOutput,
    // Present for generated runs; attack replays have no testcase to log.
    testcase: Option<TestCase>,
    opts: SimOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: TwinsStatus, msg: impl Into<String>) -> TwinsStatus {
    set_error(msg);
    status
}

/// Runs `body`, turning panics into `TwinsStatus::Panic`.
fn guard(body: impl FnOnce() -> TwinsStatus) -> TwinsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(TwinsStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, TwinsStatus> {
    if s.is_null() {
        return Err(fail(TwinsStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(TwinsStatus::InvalidUtf8, e.to_string()))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn twins_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn twins_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a testcase in the JSON form written by the
/// generator (one line of an offline file, or its `testcase` part).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twins_testcase_from_json(json: *const c_char, out: *mut *mut TwinsTestCase) -> TwinsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TwinsStatus::NullArgument, "null out pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let tc: TestCase = match serde_json::from_str(text) {
            Ok(tc) => tc,
            Err(e) => return fail(TwinsStatus::InvalidJson, e.to_string()),
        };
        if let Err(e) = tc.validate() {
            return fail(TwinsStatus::InvalidInput, e.to_string());
        }
        *out = Box::into_raw(Box::new(TwinsTestCase { inner: tc }));
        TwinsStatus::Ok
    })
}

/// # Safety
/// `tc` must come from `twins_testcase_from_json` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn twins_testcase_free(tc: *mut TwinsTestCase) {
    if !tc.is_null() {
        drop(Box::from_raw(tc));
    }
}

/// Executes a testcase against chained BFT. With `strict`, twins' commits
/// are judged as well.
///
/// # Safety
/// `tc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twins_execute(tc: *const TwinsTestCase, strict: bool, out: *mut *mut TwinsReport) -> TwinsStatus {
    guard(|| {
        if tc.is_null() || out.is_null() {
            return fail(TwinsStatus::NullArgument, "null testcase or out pointer");
        }
        let testcase = &(*tc).inner;
        let opts = SimOptions { strict_safety: strict, ..SimOptions::default() };
        let run = execute(testcase, &ChainedBftAdapter::default(), &opts);
        *out = Box::into_raw(Box::new(TwinsReport { run, testcase: Some(testcase.clone()), opts }));
        TwinsStatus::Ok
    })
}

/// Replays a scripted attack by name: zyzzyva, fab, synchs or tendermint.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twins_replay_attack(name: *const c_char, out: *mut *mut TwinsReport) -> TwinsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TwinsStatus::NullArgument, "null out pointer");
        }
        let name: AttackName = match read_str(name) {
            Ok(s) => match s.parse() {
                Ok(n) => n,
                Err(e) => return fail(TwinsStatus::UnknownAttack, format!("{e}")),
            },
            Err(status) => return status,
        };
        let replay = replay_attack(name);
        let run = RunOutput { report: replay.report, events: replay.events };
        *out = Box::into_raw(Box::new(TwinsReport { run, testcase: None, opts: SimOptions::default() }));
        TwinsStatus::Ok
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twins_report_verdict(report: *const TwinsReport) -> TwinsVerdict {
    if report.is_null() {
        return TwinsVerdict::Inconclusive;
    }
    match (*report).run.report.verdict {
        Verdict::Safe => TwinsVerdict::Safe,
        Verdict::SafetyViolation { .. } => TwinsVerdict::SafetyViolation,
        Verdict::LivenessViolation { .. } => TwinsVerdict::LivenessViolation,
        Verdict::Inconclusive { .. } => TwinsVerdict::Inconclusive,
    }
}

/// Commits made by honest instances.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twins_report_honest_commits(report: *const TwinsReport) -> usize {
    if report.is_null() {
        return 0;
    }
    (*report).run.report.honest_commits()
}

/// One-line verdict, e.g. "safety_violation: A committed .. at position 0".
/// Free with `twins_string_free`.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twins_report_verdict_text(report: *const TwinsReport) -> *mut c_char {
    if report.is_null() {
        return ptr::null_mut();
    }
    into_c_string((*report).run.report.verdict.to_string())
}

/// The full report (verdict, commit logs, counters) as JSON. Free with
/// `twins_string_free`.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twins_report_json(report: *const TwinsReport) -> *mut c_char {
    if report.is_null() {
        return ptr::null_mut();
    }
    match serde_json::to_string(&(*report).run.report) {
        Ok(s) => into_c_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Writes a run log that `twins_runlog_check` (or `twins replay-log`) can
/// re-execute. Attack replays have no testcase and yield `InvalidInput`.
///
/// # Safety
/// `report` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn twins_report_write_runlog(report: *const TwinsReport, path: *const c_char) -> TwinsStatus {
    guard(|| {
        if report.is_null() {
            return fail(TwinsStatus::NullArgument, "null report");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let r = &*report;
        let Some(tc) = &r.testcase else {
            return fail(TwinsStatus::InvalidInput, "attack replays have no testcase to log");
        };
        match RunLog::new(tc, &r.opts, &r.run).write(Path::new(path)) {
            Ok(()) => TwinsStatus::Ok,
            Err(e) => runlog_status(e),
        }
    })
}

/// Re-executes a run log; `Ok` when trace and verdict reproduce exactly.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn twins_runlog_check(path: *const c_char) -> TwinsStatus {
    guard(|| {
        let path = match read_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match RunLog::read(Path::new(path)).and_then(|log| log.replay()) {
            Ok(_) => TwinsStatus::Ok,
            Err(e) => runlog_status(e),
        }
    })
}

fn runlog_status(e: RunLogError) -> TwinsStatus {
    let status = match e {
        RunLogError::Io(_) => TwinsStatus::Io,
        RunLogError::Format(_) => TwinsStatus::InvalidJson,
        RunLogError::Diverged(_) => TwinsStatus::Diverged,
    };
    fail(status, e.to_string())
}

/// # Safety
/// `report` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn twins_report_free(report: *mut TwinsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Testcase counts per generation stage, as JSON with decimal strings.
///
/// # Safety
/// `out` must be writable; the result is freed with `twins_string_free`.
#[no_mangle]
pub unsafe extern "C" fn twins_dry_run(
    nodes: usize,
    twins: usize,
    partitions: usize,
    rounds: usize,
    out: *mut *mut c_char,
) -> TwinsStatus {
    guard(|| {
        if out.is_null() {
            return fail(TwinsStatus::NullArgument, "null out pointer");
        }
        match dry_run_stats(&GeneratorConfig::new(nodes, twins, partitions, rounds)) {
            Ok(stats) => {
                *out = into_c_string(stats.to_json().to_string());
                TwinsStatus::Ok
            }
            Err(e) => fail(TwinsStatus::InvalidInput, e.to_string()),
        }
    })
}
