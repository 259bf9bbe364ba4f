//! Drive the C surface through the Rust side: ownership transfers, status
//! mapping, and payload shapes.

use std::ffi::{CStr, CString};
use std::ptr;

use dglab_capi::*;

unsafe fn cstr(p: *const std::ffi::c_char) -> String {
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = cstr(p);
    dg_string_free(p);
    s
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { cstr(dg_version()) };
    assert!(!v.is_empty());
    assert!(v.split('.').count() >= 2);
}

#[test]
fn builtin_problem_checks_and_frees() {
    unsafe {
        let name = CString::new("log_perturbed_basic").unwrap();
        let mut handle: *mut DgProblem = ptr::null_mut();
        assert_eq!(dg_problem_builtin(name.as_ptr(), &mut handle), DgStatus::Ok);
        assert!(!handle.is_null());

        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(dg_check(handle, &mut out), DgStatus::Ok);
        let json = take_string(out);
        assert!(json.contains("\"verdict\""));
        assert!(json.contains("theorem1"));

        dg_problem_free(handle);
    }
}

#[test]
fn unknown_builtin_and_garbage_json_are_input_errors() {
    unsafe {
        let name = CString::new("no_such_scenario").unwrap();
        let mut handle: *mut DgProblem = ptr::null_mut();
        assert_eq!(dg_problem_builtin(name.as_ptr(), &mut handle), DgStatus::InvalidInput);
        assert!(handle.is_null());
        assert!(cstr(dg_last_error()).contains("no_such_scenario"));

        let garbage = CString::new("{\"name\": ").unwrap();
        assert_eq!(
            dg_problem_from_json(garbage.as_ptr(), &mut handle),
            DgStatus::InvalidInput
        );
        assert!(!cstr(dg_last_error()).is_empty());

        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(dg_check(ptr::null(), &mut out), DgStatus::InvalidInput);
    }
}

#[test]
fn problem_json_round_trips_through_the_handle() {
    // Serialize a library problem, feed it back through the JSON entry
    // point, and make sure it still classifies.
    let scenario = dglab::harness::builtin("variable_exponent_basic").unwrap();
    let json = CString::new(serde_json::to_string(&scenario.problem).unwrap()).unwrap();
    unsafe {
        let mut handle: *mut DgProblem = ptr::null_mut();
        assert_eq!(dg_problem_from_json(json.as_ptr(), &mut handle), DgStatus::Ok);
        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(dg_check(handle, &mut out), DgStatus::Ok);
        let report = take_string(out);
        assert!(report.contains("theorem1"));
        dg_problem_free(handle);
    }
}

#[test]
fn certify_emits_a_valid_certificate() {
    unsafe {
        let name = CString::new("double_phase_eps").unwrap();
        let mut handle: *mut DgProblem = ptr::null_mut();
        assert_eq!(dg_problem_builtin(name.as_ptr(), &mut handle), DgStatus::Ok);

        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(dg_certify(handle, 9, 9, 0, &mut out), DgStatus::Ok);
        let json = take_string(out);
        assert!(json.contains("\"valid\": true"));
        assert!(json.contains("\"d\""));

        dg_problem_free(handle);
    }
}

#[test]
fn certify_refuses_an_uncovered_problem() {
    unsafe {
        let name = CString::new("exp_control").unwrap();
        let mut handle: *mut DgProblem = ptr::null_mut();
        assert_eq!(dg_problem_builtin(name.as_ptr(), &mut handle), DgStatus::Ok);

        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(dg_certify(handle, 9, 9, 0, &mut out), DgStatus::InvalidInput);
        assert!(cstr(dg_last_error()).contains("refused"));

        dg_problem_free(handle);
    }
}

#[test]
fn exponent_entry_points_match_the_closed_forms() {
    let pack = r#"{"n": 2, "p": 2.0, "p_star": 4.0, "s1": 4.0, "s3": 4.0,
                   "theta": 2.0, "alpha": 0.0, "r": 1.0, "s": 2.0}"#;
    let pack_c = CString::new(pack).unwrap();
    unsafe {
        let (mut gamma, mut delta) = (0.0f64, 0.0f64);
        assert_eq!(
            dg_exponents(pack_c.as_ptr(), &mut gamma, &mut delta),
            DgStatus::Ok
        );
        assert_eq!(gamma, 1.0);
        assert_eq!(delta, 0.5);

        let mut sigma = 0.0f64;
        assert_eq!(dg_sigma(pack_c.as_ptr(), false, &mut sigma), DgStatus::Ok);
        assert_eq!(sigma, 2.0);
        // Every eps-pack denominator entry is also 2 here, so the strict
        // form agrees.
        assert_eq!(dg_sigma(pack_c.as_ptr(), true, &mut sigma), DgStatus::Ok);
        assert_eq!(sigma, 2.0);
    }
}

#[test]
fn recursion_threshold_hand_value() {
    unsafe {
        let mut tau = 0.0f64;
        assert_eq!(dg_recursion_threshold(1.0, 2.0, 1.0, &mut tau), DgStatus::Ok);
        assert_eq!(tau, 0.5);

        assert_eq!(
            dg_recursion_threshold(1.0, 0.5, 1.0, &mut tau),
            DgStatus::InvalidInput
        );
    }
}

#[test]
fn header_ships_with_the_crate() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("dglab.h");
    let text = std::fs::read_to_string(header).expect("generated header");
    for symbol in [
        "dg_version",
        "dg_problem_from_json",
        "dg_problem_builtin",
        "dg_problem_free",
        "dg_check",
        "dg_certify",
        "dg_exponents",
        "dg_sigma",
        "dg_recursion_threshold",
        "dg_last_error",
        "dg_string_free",
        "DG_STATUS_OK",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
