//! C ABI over `chatter_core`.
//!
//! Handles are opaque and owned by the caller; release them with the matching
//! `*_free`. Every fallible call returns a [`ChatterStatus`]; on failure the
//! message is available from [`chatter_last_error_message`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chatter_core::chattering::{self, GridParams};
use chatter_core::problems::{self, DemandProfile, SupplyChainOptions};
use chatter_core::shooting::{self, PerturbationSize, SensitivityMode, ShootingConfig};
use chatter_core::{ChatterError, ControlProblem, PropagationSettings, ShootingResult, TimePartition};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatterStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonFinite = 3,
    Infeasible = 4,
    EmptyGrid = 5,
    DimensionMismatch = 6,
    SingularCorrection = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatterDemand {
    Constant = 0,
    Seasonal = 1,
    Pulse = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatterSensitivity {
    Resolve = 0,
    FrozenMeasure = 1,
}

/// Shooting and grid settings. Start from [`chatter_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChatterSolveOptions {
    /// 0 uses the problem's own interval count.
    pub intervals: usize,
    pub levels_per_dim: usize,
    pub level_cap: usize,
    pub gamma: f64,
    /// Relative perturbation: `δp = delta_p · max(1, ‖p0‖)`.
    pub delta_p: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub ridge: f64,
    pub max_backtracks: usize,
    pub sensitivity: ChatterSensitivity,
}

/// Opaque problem handle.
pub struct ChatterProblem {
    problem: ControlProblem,
    intervals: usize,
    /// Problem data is tied to `intervals`; other partitions are rejected.
    fixed_intervals: bool,
    sensitivity: ChatterSensitivity,
}

/// Opaque solve result handle.
pub struct ChatterResult {
    result: ShootingResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &ChatterError) -> ChatterStatus {
    match e.root() {
        ChatterError::NonFiniteEvaluation { .. } => ChatterStatus::NonFinite,
        ChatterError::InfeasibleLevels { .. } => ChatterStatus::Infeasible,
        ChatterError::EmptyGrid => ChatterStatus::EmptyGrid,
        ChatterError::DimensionMismatch { .. } => ChatterStatus::DimensionMismatch,
        ChatterError::SingularCorrection { .. } => ChatterStatus::SingularCorrection,
        _ => ChatterStatus::InvalidArgument,
    }
}

struct Failure(ChatterStatus, String);

impl From<ChatterError> for Failure {
    fn from(e: ChatterError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: ChatterStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ChatterStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ChatterStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            ChatterStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(ChatterStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, capacity: usize, what: &str) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(fail(
            ChatterStatus::BufferTooSmall,
            format!("{what} needs {} values, buffer holds {capacity}", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(fail(ChatterStatus::NullPointer, format!("{what} buffer is null")));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass handles obtained from this library.
    unsafe { p.as_ref() }.ok_or_else(|| fail(ChatterStatus::NullPointer, format!("{what} is null")))
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(ChatterStatus::NullPointer, "output pointer is null"));
    }
    // SAFETY: `out` is non-null and points to writable storage per the contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failing call on this thread, or null. Valid until the
/// next failing call on this thread.
#[no_mangle]
pub extern "C" fn chatter_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn chatter_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn chatter_solve_options_default() -> ChatterSolveOptions {
    let shooting = ShootingConfig::default();
    let grid = GridParams::default();
    ChatterSolveOptions {
        intervals: 0,
        levels_per_dim: grid.levels_per_dim,
        level_cap: grid.cap,
        gamma: shooting.gamma,
        delta_p: 1e-3,
        epsilon: shooting.epsilon,
        max_iterations: shooting.max_iterations,
        ridge: shooting.ridge,
        max_backtracks: shooting.max_backtracks,
        sensitivity: ChatterSensitivity::Resolve,
    }
}

/// Scalar LQR benchmark on [0, 1]; default partition of 100 intervals.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_lqr(out: *mut *mut ChatterProblem) -> ChatterStatus {
    guard(|| {
        put(
            out,
            ChatterProblem {
                problem: problems::build_lqr(),
                intervals: 100,
                fixed_intervals: false,
                sensitivity: ChatterSensitivity::Resolve,
            },
        )
    })
}

/// Supply-chain problem with synthetic demand, built for `intervals` intervals.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_supply_chain(
    demand: ChatterDemand,
    amplitude: f64,
    period: f64,
    horizon: f64,
    intervals: usize,
    out: *mut *mut ChatterProblem,
) -> ChatterStatus {
    guard(|| {
        let profile = match demand {
            ChatterDemand::Constant => DemandProfile::Constant,
            ChatterDemand::Seasonal => DemandProfile::Seasonal,
            ChatterDemand::Pulse => DemandProfile::Pulse,
        };
        let model = problems::synthetic_demand(profile, amplitude, period)?;
        let problem = problems::build_supply_chain_with(&model, horizon, intervals, SupplyChainOptions::default())?;
        put(
            out,
            ChatterProblem {
                problem,
                intervals,
                fixed_intervals: true,
                sensitivity: ChatterSensitivity::FrozenMeasure,
            },
        )
    })
}

/// # Safety
/// `problem` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_free(problem: *mut ChatterProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_state_dim(problem: *const ChatterProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.problem.state_dim())
}

/// Control dimension, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_control_dim(problem: *const ChatterProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.problem.control_dim())
}

/// Recommended sensitivity mode for the problem.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_problem_default_sensitivity(problem: *const ChatterProblem) -> ChatterSensitivity {
    problem.as_ref().map_or(ChatterSensitivity::Resolve, |p| p.sensitivity)
}

/// Shoots for the initial costate. `p0` may be null with `p0_len == 0` for the
/// zero guess; `options` may be null for defaults. A result handle is written
/// whether or not the iteration converged; check `chatter_result_converged`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chatter_solve(
    problem: *const ChatterProblem,
    options: *const ChatterSolveOptions,
    p0: *const f64,
    p0_len: usize,
    out: *mut *mut ChatterResult,
) -> ChatterStatus {
    guard(|| {
        let handle = non_null(problem, "problem")?;
        let opts = match options.as_ref() {
            Some(o) => *o,
            None => ChatterSolveOptions {
                sensitivity: handle.sensitivity,
                ..chatter_solve_options_default()
            },
        };
        let intervals = if opts.intervals == 0 { handle.intervals } else { opts.intervals };
        if handle.fixed_intervals && intervals != handle.intervals {
            return Err(fail(
                ChatterStatus::InvalidArgument,
                format!("problem was built for {} intervals, options ask for {intervals}", handle.intervals),
            ));
        }
        let guess = slice(p0, p0_len, "p0")?;
        let config = ShootingConfig {
            gamma: opts.gamma,
            delta_p: PerturbationSize::Relative(opts.delta_p),
            epsilon: opts.epsilon,
            max_iterations: opts.max_iterations,
            ridge: opts.ridge,
            p0_initial: (!guess.is_empty()).then(|| guess.to_vec()),
            sensitivity: match opts.sensitivity {
                ChatterSensitivity::Resolve => SensitivityMode::Resolve,
                ChatterSensitivity::FrozenMeasure => SensitivityMode::FrozenMeasure,
            },
            max_backtracks: opts.max_backtracks,
        };
        let settings = PropagationSettings {
            grid: GridParams {
                levels_per_dim: opts.levels_per_dim,
                cap: opts.level_cap,
            },
            ..PropagationSettings::default()
        };
        settings.grid.validate()?;
        let partition = TimePartition::uniform(handle.problem.horizon(), intervals)?;
        let result = shooting::solve(&handle.problem, &partition, &config, &settings)?;
        put(out, ChatterResult { result })
    })
}

/// # Safety
/// `result` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_free(result: *mut ChatterResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_converged(result: *const ChatterResult) -> bool {
    result.as_ref().is_some_and(|r| r.result.converged)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_iterations(result: *const ChatterResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.iterations)
}

/// Final transversality residual norm; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_residual(result: *const ChatterResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.result.final_residual)
}

/// Total cost including the terminal cost; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_cost(result: *const ChatterResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.result.trajectory.accumulated_cost)
}

/// Number of trajectory points (intervals + 1); 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_points(result: *const ChatterResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.trajectory.points.len())
}

/// Copies the converged initial costate into `out` (capacity `len`).
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_p0(result: *const ChatterResult, out: *mut f64, len: usize) -> ChatterStatus {
    guard(|| copy_out(&non_null(result, "result")?.result.p0_final, out, len, "p0"))
}

/// Copies time, state and costate of trajectory point `index`.
/// `x_out` and `p_out` must each hold the state dimension.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn chatter_result_point(
    result: *const ChatterResult,
    index: usize,
    t_out: *mut f64,
    x_out: *mut f64,
    p_out: *mut f64,
    len: usize,
) -> ChatterStatus {
    guard(|| {
        let points = &non_null(result, "result")?.result.trajectory.points;
        let point = points.get(index).ok_or_else(|| {
            fail(ChatterStatus::InvalidArgument, format!("point {index} out of range ({} points)", points.len()))
        })?;
        if t_out.is_null() {
            return Err(fail(ChatterStatus::NullPointer, "t buffer is null"));
        }
        *t_out = point.t;
        copy_out(&point.x, x_out, len, "x")?;
        copy_out(&point.p, p_out, len, "p")
    })
}

/// Minimizes `Σ w_k h_k` over the simplex; writes `n` weights to `weights_out`.
///
/// # Safety
/// `h` must be valid for `n` reads and `weights_out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn chatter_solve_measure_lp(h: *const f64, n: usize, weights_out: *mut f64) -> ChatterStatus {
    guard(|| {
        let values = slice(h, n, "h")?;
        let measure = chattering::solve_measure_lp(values)?;
        copy_out(measure.weights(), weights_out, n, "weights")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn error_message_is_thread_local() {
        let status = unsafe { chatter_solve_measure_lp(ptr::null(), 3, ptr::null_mut()) };
        assert_eq!(status, ChatterStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(chatter_last_error_message()) }.to_str().unwrap().to_owned();
        assert!(msg.contains("null"));
        std::thread::spawn(|| assert!(chatter_last_error_message().is_null())).join().unwrap();
    }

    #[test]
    fn empty_lp_maps_to_empty_grid() {
        let mut w = [0.0; 1];
        assert_eq!(unsafe { chatter_solve_measure_lp(w.as_ptr(), 0, w.as_mut_ptr()) }, ChatterStatus::EmptyGrid);
    }
}
