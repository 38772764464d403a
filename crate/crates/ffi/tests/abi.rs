// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use twins_forge_ffi::*;

/// A quorum-2f testcase with A and A' in different cells of a 2/3 split.
const SPLIT_CASE: &str = r#"{
    "num_nodes": 4,
    "target_nodes": [0],
    "round_partitions": {"1": [[0, 1], [2, 3, 4]]},
    "round_leaders": {"1": [0]},
    "mutation": {"accept_equal_round_votes": false, "freeze_preferred_round": false, "skip_last_voted_check": false, "quorum_size_override": 2},
    "seed": 11,
    "round_budget": 7
}"#;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { twins_string_free(s) };
    out
}

fn last_error() -> String {
    let p = twins_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn testcase(json: &str) -> Result<*mut TwinsTestCase, TwinsStatus> {
    let json = CString::new(json).unwrap();
    let mut tc = ptr::null_mut();
    match unsafe { twins_testcase_from_json(json.as_ptr(), &mut tc) } {
        TwinsStatus::Ok => Ok(tc),
        status => Err(status),
    }
}

#[test]
fn execute_report_and_runlog() {
    let tc = testcase(SPLIT_CASE).unwrap_or_else(|s| panic!("{s:?}: {}", last_error()));
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { twins_execute(tc, false, &mut report) }, TwinsStatus::Ok);
    assert_eq!(unsafe { twins_report_verdict(report) }, TwinsVerdict::SafetyViolation);
    assert!(take(unsafe { twins_report_verdict_text(report) }).starts_with("safety_violation"));
    let json: serde_json::Value = serde_json::from_str(&take(unsafe { twins_report_json(report) })).unwrap();
    assert_eq!(json["verdict"]["verdict"], "safety_violation");

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("log.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { twins_report_write_runlog(report, path.as_ptr()) }, TwinsStatus::Ok);
    assert_eq!(unsafe { twins_runlog_check(path.as_ptr()) }, TwinsStatus::Ok);

    unsafe {
        twins_report_free(report);
        twins_testcase_free(tc);
    }
}

#[test]
fn bad_inputs_report_status_and_message() {
    assert_eq!(testcase("{").unwrap_err(), TwinsStatus::InvalidJson);
    let no_leaders = SPLIT_CASE.replace(r#""round_leaders": {"1": [0]}"#, r#""round_leaders": {"1": [9]}"#);
    assert_eq!(testcase(&no_leaders).unwrap_err(), TwinsStatus::InvalidInput);
    assert!(!last_error().is_empty());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { twins_testcase_from_json(ptr::null(), &mut out) }, TwinsStatus::NullArgument);
    assert_eq!(unsafe { twins_execute(ptr::null(), false, &mut ptr::null_mut()) }, TwinsStatus::NullArgument);
    let missing = CString::new("/nonexistent/log.json").unwrap();
    assert_eq!(unsafe { twins_runlog_check(missing.as_ptr()) }, TwinsStatus::Io);

    let mut stats = ptr::null_mut();
    assert_eq!(unsafe { twins_dry_run(4, 1, 9, 7, &mut stats) }, TwinsStatus::InvalidInput);
}

#[test]
fn attack_replays_have_expected_verdicts() {
    for (name, verdict) in [
        ("zyzzyva", TwinsVerdict::SafetyViolation),
        ("fab", TwinsVerdict::LivenessViolation),
        ("synchs", TwinsVerdict::SafetyViolation),
        ("tendermint", TwinsVerdict::LivenessViolation),
    ] {
        let name = CString::new(name).unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(unsafe { twins_replay_attack(name.as_ptr(), &mut report) }, TwinsStatus::Ok);
        assert_eq!(unsafe { twins_report_verdict(report) }, verdict);
        // Nothing to log for a scripted replay.
        let path = CString::new("/tmp/unused.json").unwrap();
        assert_eq!(unsafe { twins_report_write_runlog(report, path.as_ptr()) }, TwinsStatus::InvalidInput);
        unsafe { twins_report_free(report) };
    }
}

#[test]
fn dry_run_counts() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { twins_dry_run(7, 2, 3, 7, &mut out) }, TwinsStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(json["step1"], "3025");
    assert_eq!(json["step2"], "6050");
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/twins_forge.h")).unwrap();
    for sym in [
        "twins_testcase_from_json",
        "twins_execute",
        "twins_replay_attack",
        "twins_report_verdict",
        "twins_report_json",
        "twins_runlog_check",
        "twins_dry_run",
        "twins_last_error",
        "twins_string_free",
        "typedef struct TwinsReport TwinsReport",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

/// Builds the C smoke program against the header and static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // Test binaries live in target/<profile>/deps; the static library one up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libtwins_forge_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("run cc");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("safety_violation"));
}
