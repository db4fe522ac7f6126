//! C interface to the dgmdp solver, hazard engine and bonus optimizers.
//!
//! Every fallible call returns a [`DgmdpStatus`]. On failure the message is
//! available from [`dgmdp_last_error_message`] until the next failing call on
//! the same thread. Handles and strings returned by the library must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dgmdp::incentive::{optimize_bonus_limit, optimize_interest_accrual, prospect_weight, BonusLimitScenario, InterestScenario};
use dgmdp::{AgentParams, Error, SolverKind, TaskParams, ValueSolution};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgmdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidParams = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    NumericFailure = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgmdpSolver {
    Pla = 0,
    Grid = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgmdpSetting {
    InterestAccrual = 0,
    BonusLimit = 1,
}

/// Solved value function for one task and agent.
pub struct DgmdpSolution {
    inner: Box<dyn ValueSolution>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> DgmdpStatus {
    match e {
        Error::Json(_) => DgmdpStatus::InvalidJson,
        Error::StepOutOfRange { .. } => DgmdpStatus::OutOfRange,
        Error::GridTooNarrow { .. } | Error::GridTooCoarse(_) => DgmdpStatus::NumericFailure,
        _ => DgmdpStatus::InvalidParams,
    }
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (DgmdpStatus, String)>) -> DgmdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            DgmdpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DgmdpStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (DgmdpStatus, String) {
    (status_of(&e), format!("{}: {e}", e.kind()))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DgmdpStatus, String)> {
    if p.is_null() {
        return Err((DgmdpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DgmdpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn null_out(what: &str) -> (DgmdpStatus, String) {
    (DgmdpStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dgmdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Solve the task described by `task_json` for the agent in `agent_json`.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be a
/// valid pointer. On success `*out` owns a handle to release with
/// [`dgmdp_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solve(
    task_json: *const c_char,
    agent_json: *const c_char,
    solver: DgmdpSolver,
    out: *mut *mut DgmdpSolution,
) -> DgmdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        *out = ptr::null_mut();
        let task = TaskParams::from_json(read_str(task_json, "task_json")?).map_err(lib_err)?;
        let agent = AgentParams::from_json(read_str(agent_json, "agent_json")?).map_err(lib_err)?;
        let kind = match solver {
            DgmdpSolver::Pla => SolverKind::Pla,
            DgmdpSolver::Grid => SolverKind::Grid,
        };
        let inner = dgmdp::solve(kind, &task, &agent).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DgmdpSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from [`dgmdp_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solution_free(solution: *mut DgmdpSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Horizon of a solved task, or 0 for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solution_tau(solution: *const DgmdpSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.inner.problem().tau())
}

/// `V(t, w)` and both action values at step `t` (1-based).
///
/// # Safety
/// `solution` must be a live handle; output pointers must be valid or null
/// (null outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solution_values(
    solution: *const DgmdpSolution,
    t: usize,
    w: f64,
    value: *mut f64,
    q_defect: *mut f64,
    q_persist: *mut f64,
) -> DgmdpStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_out("solution"))?;
        let q = s.inner.action_values(t, w).map_err(lib_err)?;
        if let Some(v) = value.as_mut() {
            *v = q.q_defect.max(q.q_persist);
        }
        if let Some(v) = q_defect.as_mut() {
            *v = q.q_defect;
        }
        if let Some(v) = q_persist.as_mut() {
            *v = q.q_persist;
        }
        Ok(())
    })
}

/// Copy `tau` thresholds into `out`; `len` is the buffer length.
///
/// # Safety
/// `solution` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solution_thresholds(solution: *const DgmdpSolution, out: *mut f64, len: usize) -> DgmdpStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_out("solution"))?;
        write_slice(&s.inner.threshold_values(), out, len)
    })
}

/// Hazard curve from `q` posterior quantiles, `tau` values into `out`.
///
/// # Safety
/// `solution` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_solution_hazard(
    solution: *const DgmdpSolution,
    q: usize,
    out: *mut f64,
    len: usize,
) -> DgmdpStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_out("solution"))?;
        let h = dgmdp::hazard::hazard_from_solution(s.inner.as_ref(), q).map_err(lib_err)?;
        write_slice(&h.h, out, len)
    })
}

unsafe fn write_slice(values: &[f64], out: *mut f64, len: usize) -> Result<(), (DgmdpStatus, String)> {
    if out.is_null() {
        return Err(null_out("out"));
    }
    if len < values.len() {
        return Err((
            DgmdpStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Lottery overweighting factor for win probability `1 / alpha`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_prospect_weight(alpha: f64, out: *mut f64) -> DgmdpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_out("out"))?;
        *out = prospect_weight(alpha).map_err(lib_err)?;
        Ok(())
    })
}

/// Optimize a bonus schedule; `*out` receives the result as JSON, to be
/// released with [`dgmdp_string_free`]. `tau` is used by the bonus-limit
/// setting only.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_optimize(
    setting: DgmdpSetting,
    scenario_json: *const c_char,
    agent_json: *const c_char,
    tau: usize,
    out: *mut *mut c_char,
) -> DgmdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        *out = ptr::null_mut();
        let scenario = read_str(scenario_json, "scenario_json")?;
        let agent = AgentParams::from_json(read_str(agent_json, "agent_json")?).map_err(lib_err)?;
        let result = match setting {
            DgmdpSetting::InterestAccrual => {
                let sc: InterestScenario = serde_json::from_str(scenario).map_err(|e| lib_err(e.into()))?;
                optimize_interest_accrual(&agent, &sc)
            }
            DgmdpSetting::BonusLimit => {
                let sc: BonusLimitScenario = serde_json::from_str(scenario).map_err(|e| lib_err(e.into()))?;
                optimize_bonus_limit(&agent, &sc, tau)
            }
        }
        .map_err(lib_err)?;
        let json = serde_json::to_string(&result).map_err(|e| lib_err(e.into()))?;
        *out = CString::new(json)
            .map_err(|e| (DgmdpStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dgmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
