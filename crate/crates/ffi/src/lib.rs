//! C interface to `vmc-core`.
//!
//! Instances and results are opaque heap handles released with their `_free`
//! functions. Every function returns a `VmcStatus`; on failure a message is
//! kept per thread and can be read with `vmc_last_error`. Strings returned
//! through `char **` out-parameters are owned by the caller and released with
//! `vmc_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vmc_core::bench::{run_algorithm, AlgoSettings, Algorithm, RunResult, RunStatus};
use vmc_core::generator::{generate_instance, GenParams};
use vmc_core::model::{check_plan, Instance, Plan};
use vmc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// Malformed JSON or non-UTF-8 text.
    Parse = 3,
    /// Numerical breakdown or no feasible plan.
    SolverFailure = 4,
    /// The result carries no plan.
    NoSolution = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmcAlgorithm {
    Exact = 0,
    Ksf = 1,
    Ksfv = 2,
    Ksfvg = 3,
}

impl From<VmcAlgorithm> for Algorithm {
    fn from(a: VmcAlgorithm) -> Self {
        match a {
            VmcAlgorithm::Exact => Algorithm::Exact,
            VmcAlgorithm::Ksf => Algorithm::Ksf,
            VmcAlgorithm::Ksfv => Algorithm::Ksfv,
            VmcAlgorithm::Ksfvg => Algorithm::Ksfvg,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmcRunStatus {
    Optimal = 0,
    Feasible = 1,
    Infeasible = 2,
    NoSolution = 3,
}

/// Solver settings. Start from `vmc_solve_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmcSolveOptions {
    /// Seconds; the kernel search budget or the exact solver limit.
    pub time_limit: f64,
    /// Relative gap; a negative value keeps the algorithm default.
    pub gap_tol: f64,
    /// Buckets to analyze; 0 analyzes all of them.
    pub nbar: usize,
    pub omega: f64,
    pub epsilon: f64,
}

pub struct VmcInstance {
    inner: Instance,
}

pub struct VmcResult {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> VmcStatus {
    match e {
        Error::NumericalBreakdown(_) | Error::StillInfeasible | Error::NoSolution => VmcStatus::SolverFailure,
        _ => VmcStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (VmcStatus, String)>) -> VmcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VmcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VmcStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (VmcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (VmcStatus, String) {
    (VmcStatus::NullPointer, "null pointer argument".into())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (VmcStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (VmcStatus::Parse, format!("string is not UTF-8: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (VmcStatus, String)> {
    let c = CString::new(s).map_err(|e| (VmcStatus::Parse, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn vmc_status_message(status: VmcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VmcStatus::Ok => c"ok",
        VmcStatus::NullPointer => c"null pointer argument",
        VmcStatus::InvalidInput => c"invalid input",
        VmcStatus::Parse => c"parse error",
        VmcStatus::SolverFailure => c"solver failure",
        VmcStatus::NoSolution => c"no solution",
        VmcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vmc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a random instance.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_generate(
    num_servers: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    seed: u64,
    out: *mut *mut VmcInstance,
) -> VmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner = generate_instance(&GenParams::new(num_servers, alpha, beta, gamma, seed)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(VmcInstance { inner }));
        Ok(())
    })
}

/// Parses an instance from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_from_json(json: *const c_char, out: *mut *mut VmcInstance) -> VmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner: Instance =
            serde_json::from_str(read_str(json)?).map_err(|e| (VmcStatus::Parse, e.to_string()))?;
        inner.validate().map_err(core_err)?;
        *out = Box::into_raw(Box::new(VmcInstance { inner }));
        Ok(())
    })
}

/// Serializes an instance to JSON. Release the string with `vmc_string_free`.
///
/// # Safety
/// `inst` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_to_json(inst: *const VmcInstance, out: *mut *mut c_char) -> VmcStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let text = serde_json::to_string(&inst.inner).map_err(|e| (VmcStatus::Parse, e.to_string()))?;
        write_string(out, text)
    })
}

/// Number of servers, or 0 for NULL.
///
/// # Safety
/// `inst` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_num_servers(inst: *const VmcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.num_servers())
}

/// Number of VM types, or 0 for NULL.
///
/// # Safety
/// `inst` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_num_vm_types(inst: *const VmcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.num_vm_types())
}

/// # Safety
/// `inst` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vmc_instance_free(inst: *mut VmcInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

#[no_mangle]
pub extern "C" fn vmc_solve_options_default() -> VmcSolveOptions {
    let s = AlgoSettings::default();
    VmcSolveOptions {
        time_limit: s.time_limit,
        gap_tol: -1.0,
        nbar: 0,
        omega: s.omega,
        epsilon: s.epsilon,
    }
}

/// Solves an instance. A run that finds no plan still succeeds and yields a
/// result whose status says so; `VMC_STATUS_SOLVER_FAILURE` is reserved for
/// numerical trouble.
///
/// # Safety
/// `inst` must be a live handle, `options` NULL (defaults) or valid, and
/// `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_solve(
    inst: *const VmcInstance,
    algorithm: VmcAlgorithm,
    options: *const VmcSolveOptions,
    out: *mut *mut VmcResult,
) -> VmcStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let o = options.as_ref().copied().unwrap_or_else(|| vmc_solve_options_default());
        let settings = AlgoSettings {
            time_limit: o.time_limit,
            gap_tol: (o.gap_tol >= 0.0).then_some(o.gap_tol),
            n_bar: (o.nbar > 0).then_some(o.nbar),
            omega: o.omega,
            epsilon: o.epsilon,
        };
        if settings.time_limit.is_nan() || settings.time_limit <= 0.0 {
            return Err((VmcStatus::InvalidInput, "time_limit must be positive".into()));
        }
        let inner = run_algorithm(&inst.inner, algorithm.into(), &settings).map_err(core_err)?;
        *out = Box::into_raw(Box::new(VmcResult { inner }));
        Ok(())
    })
}

/// # Safety
/// `res` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_result_status(res: *const VmcResult, out: *mut VmcRunStatus) -> VmcStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = match res.inner.status {
            RunStatus::Optimal => VmcRunStatus::Optimal,
            RunStatus::Feasible => VmcRunStatus::Feasible,
            RunStatus::Infeasible => VmcRunStatus::Infeasible,
            RunStatus::NoSolution => VmcRunStatus::NoSolution,
        };
        Ok(())
    })
}

/// Objective of the plan; `VMC_STATUS_NO_SOLUTION` when there is none.
///
/// # Safety
/// `res` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_result_objective(res: *const VmcResult, out: *mut f64) -> VmcStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = res
            .inner
            .objective
            .ok_or((VmcStatus::NoSolution, "the run found no plan".to_string()))?;
        Ok(())
    })
}

/// Wall time of the run in seconds, or a negative value for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vmc_result_time(res: *const VmcResult) -> f64 {
    res.as_ref().map_or(-1.0, |r| r.inner.time)
}

/// Plan as JSON (`x`, `y`, `z`, `x_new`); `VMC_STATUS_NO_SOLUTION` when
/// there is none. Release the string with `vmc_string_free`.
///
/// # Safety
/// `res` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_result_plan_json(res: *const VmcResult, out: *mut *mut c_char) -> VmcStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let plan = res
            .inner
            .plan
            .as_ref()
            .ok_or((VmcStatus::NoSolution, "the run found no plan".to_string()))?;
        write_string(out, serde_json::to_string(plan).map_err(|e| (VmcStatus::Parse, e.to_string()))?)
    })
}

/// # Safety
/// `res` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vmc_result_free(res: *mut VmcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Counts the constraint violations of a plan given as JSON.
///
/// # Safety
/// `inst` must be a live handle, `plan_json` a NUL-terminated string and
/// `violations` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vmc_check_plan_json(
    inst: *const VmcInstance,
    plan_json: *const c_char,
    violations: *mut usize,
) -> VmcStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(null)?;
        if violations.is_null() {
            return Err(null());
        }
        let plan: Plan = serde_json::from_str(read_str(plan_json)?).map_err(|e| (VmcStatus::Parse, e.to_string()))?;
        *violations = check_plan(&inst.inner, &plan).map_err(core_err)?.len();
        Ok(())
    })
}
