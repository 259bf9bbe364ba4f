//! C interface: opaque problem handles, JSON payloads in and out, and
//! integer status codes that follow the command-line exit convention.
//!
//! Every entry point is panic-safe; failures store a message retrievable
//! through `dg_last_error` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dglab::degiorgi::{find_threshold_d_with, recursion_lemma, CertifyOptions};
use dglab::grid::{DiscreteFunction, Grid};
use dglab::harness;
use dglab::problem::{classify, ProblemSpec, Verdict};
use dglab::solver::{solve, SolveOptions};
use dglab::structure::{delta_exponent, gamma_exponent, sigma_exponent, ParameterPack, SigmaForm};
use dglab::Error;

/// Call outcome. Matches the command-line exit codes: 0 success, 1 the
/// work ran but the verdict is negative, 2 the input was rejected, 3 a
/// numerical failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    Failed = 1,
    InvalidInput = 2,
    Numerical = 3,
}

/// Opaque validated problem handle.
pub struct DgProblem(ProblemSpec);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn fail(err: &Error) -> DgStatus {
    set_error(&err.to_string());
    match harness::exit_code(err) {
        2 => DgStatus::InvalidInput,
        _ => DgStatus::Numerical,
    }
}

fn guarded(f: impl FnOnce() -> DgStatus) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DgStatus::Numerical
        }
    }
}

/// Borrow a C string as UTF-8 or fail with InvalidInput.
///
/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn utf8<'a>(s: *const c_char, what: &str) -> Result<&'a str, DgStatus> {
    if s.is_null() {
        set_error(&format!("{what} pointer is null"));
        return Err(DgStatus::InvalidInput);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        DgStatus::InvalidInput
    })
}

fn emit(out: *mut *mut c_char, text: String) -> DgStatus {
    let c = match CString::new(text) {
        Ok(c) => c,
        Err(_) => {
            set_error("payload contained an interior NUL");
            return DgStatus::Numerical;
        }
    };
    unsafe { *out = c.into_raw() };
    DgStatus::Ok
}

/// Version of the underlying library, static storage.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, static until the
/// next failing call. Never null.
#[no_mangle]
pub extern "C" fn dg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned through an out-parameter.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library.
#[no_mangle]
pub unsafe extern "C" fn dg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a problem description from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_problem_from_json(
    json: *const c_char,
    out: *mut *mut DgProblem,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let text = match utf8(json, "problem JSON") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: ProblemSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(err) => return fail(&Error::Json(err)),
        };
        if let Err(err) = spec.validate() {
            return fail(&err);
        }
        *out = Box::into_raw(Box::new(DgProblem(spec)));
        DgStatus::Ok
    })
}

/// Problem of a named library scenario.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_problem_builtin(
    name: *const c_char,
    out: *mut *mut DgProblem,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let name = match utf8(name, "scenario name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match harness::builtin(name) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(DgProblem(s.problem)));
                DgStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Release a problem handle.
///
/// # Safety
/// `p` must be null or a pointer from dg_problem_from_json/builtin.
#[no_mangle]
pub unsafe extern "C" fn dg_problem_free(p: *mut DgProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn deref_problem<'a>(p: *const DgProblem) -> Result<&'a ProblemSpec, DgStatus> {
    if p.is_null() {
        set_error("problem handle is null");
        return Err(DgStatus::InvalidInput);
    }
    Ok(&(*p).0)
}

/// Run the hypothesis checks; writes a classification report as JSON.
///
/// # Safety
/// `p` must be a live problem handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_check(p: *const DgProblem, out_json: *mut *mut c_char) -> DgStatus {
    guarded(|| {
        if out_json.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let problem = match deref_problem(p) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match classify(problem).and_then(|c| Ok(serde_json::to_string_pretty(&c)?)) {
            Ok(text) => emit(out_json, text),
            Err(err) => fail(&err),
        }
    })
}

/// Run the full pipeline on an nx-by-ny grid and write the certificate as
/// JSON. `max_h` of zero keeps the default ladder length. Returns Failed
/// when the pipeline ran but the certificate did not validate.
///
/// # Safety
/// `p` must be a live problem handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_certify(
    p: *const DgProblem,
    nx: usize,
    ny: usize,
    max_h: usize,
    out_json: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if out_json.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let problem = match deref_problem(p) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let run = || -> dglab::Result<dglab::degiorgi::Certificate> {
            let cls = classify(problem)?;
            if cls.verdict == Verdict::Uncovered {
                return Err(Error::input(format!(
                    "problem classifies as uncovered, certification refused: {}",
                    cls.reasons.join("; ")
                )));
            }
            let bx = &problem.domain.x_box;
            if bx.len() != 2 {
                return Err(Error::input("certification needs a two-dimensional domain"));
            }
            let grid = Grid::new([bx[0], bx[1]], nx, ny)?;
            let start = DiscreteFunction::interpolate(grid, &problem.boundary);
            let record = solve(problem, &start, &SolveOptions::default())?;
            let mut opts = CertifyOptions::default();
            if max_h > 0 {
                opts.h_max = max_h;
            }
            find_threshold_d_with(problem, &record.u, &opts)
        };
        match run() {
            Ok(cert) => {
                let text = match serde_json::to_string_pretty(&cert) {
                    Ok(t) => t,
                    Err(err) => return fail(&Error::Json(err)),
                };
                let status = emit(out_json, text);
                if status == DgStatus::Ok && !cert.valid {
                    set_error("certificate did not validate");
                    return DgStatus::Failed;
                }
                status
            }
            Err(err) => fail(&err),
        }
    })
}

fn parse_pack(text: &str) -> dglab::Result<ParameterPack> {
    let pack: ParameterPack = serde_json::from_str(text)?;
    pack.validate()?;
    Ok(pack)
}

/// Estimate and decay exponents for a declared parameter set (JSON).
///
/// # Safety
/// `pack_json` must be a NUL-terminated string; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dg_exponents(
    pack_json: *const c_char,
    out_gamma: *mut f64,
    out_delta: *mut f64,
) -> DgStatus {
    guarded(|| {
        if out_gamma.is_null() || out_delta.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let text = match utf8(pack_json, "parameter JSON") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let run = || -> dglab::Result<(f64, f64)> {
            let pack = parse_pack(text)?;
            Ok((gamma_exponent(&pack)?, delta_exponent(&pack)?))
        };
        match run() {
            Ok((g, d)) => {
                *out_gamma = g;
                *out_delta = d;
                DgStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Integrability exponent sigma; `epsilon_form` selects the strict-interior
/// variant.
///
/// # Safety
/// `pack_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dg_sigma(
    pack_json: *const c_char,
    epsilon_form: bool,
    out: *mut f64,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        let text = match utf8(pack_json, "parameter JSON") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let form = if epsilon_form { SigmaForm::Epsilon } else { SigmaForm::Exact };
        match parse_pack(text).and_then(|pack| sigma_exponent(&pack, form)) {
            Ok(v) => {
                *out = v;
                DgStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Largest starting value from which the one-step recursion contracts to
/// zero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_recursion_threshold(
    l: f64,
    zeta: f64,
    delta: f64,
    out: *mut f64,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return DgStatus::InvalidInput;
        }
        match recursion_lemma(1.0, l, zeta, delta, 0) {
            Ok(check) => {
                *out = check.threshold;
                DgStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}
