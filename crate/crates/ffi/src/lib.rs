//! C ABI over the `safety_filters` crate.
//!
//! Every object crosses the boundary as an opaque pointer written to an
//! `out` argument and released by the matching `sf_*_free`.
//! Every fallible function returns an [`SfStatus`]; on failure the message is
//! kept per thread and can be read with [`sf_last_error_message`].
//! Panics never unwind into C: they are caught and reported as
//! `SF_STATUS_PANIC`.
//!
//! Vectors are passed as a pointer plus a length. Lengths are checked
//! against the model dimensions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;
use std::sync::Arc;

use safety_filters::config::RunConfig;
use safety_filters::dynamics::{make_double_integrator, SystemModel};
use safety_filters::filter::{decide, least_restrictive_filter};
use safety_filters::hj::{candidate_lattices, solve, GridSpec, SolveOptions, ValueGrid};
use safety_filters::margin::{margin_halfspace, MarginFunction};
use safety_filters::{Error, IntervalBox, SafetyFilter};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    NotConverged = 7,
    DeploymentRejected = 8,
    BudgetExceeded = 9,
    Panic = 10,
}

impl From<&Error> for SfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::OutOfBounds { .. } | Error::NotControlAffine(_) | Error::Rejected(_) => {
                SfStatus::InvalidArgument
            }
            Error::DimensionMismatch { .. } => SfStatus::DimensionMismatch,
            Error::Config { .. } => SfStatus::Config,
            Error::Io(_) | Error::Csv(_) => SfStatus::Io,
            Error::Format(_) => SfStatus::Format,
            Error::DeploymentRejected(_) => SfStatus::DeploymentRejected,
            Error::BudgetExceeded { .. } => SfStatus::BudgetExceeded,
        }
    }
}

/// A discrete-time system model.
pub struct SfModel(SystemModel);

/// A safety margin `g`; the failure set is `g < 0`.
pub struct SfMargin(MarginFunction);

/// A solved value grid.
pub struct SfGrid(Arc<ValueGrid>);

/// A safety filter together with the dimensions of its model.
pub struct SfFilter {
    filter: Box<dyn SafetyFilter>,
    state_dim: usize,
    control_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SfStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, records any error or panic and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            SfStatus::Panic
        }
    }
}

unsafe fn input<'a>(what: &str, p: *const f64, len: usize, expected: usize) -> Result<&'a [f64], Failure> {
    if len != expected {
        return Err(Failure(SfStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {len}")));
    }
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn counts<'a>(what: &str, p: *const usize, len: usize) -> Result<&'a [usize], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(what: &str, p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn reference<'a, T>(what: &str, p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(SfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn give<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length without the NUL,
/// or 0 if the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Double integrator `p' = p + v dt`, `v' = v + (u + d) dt` with `|u| <= u_max`, `|d| <= d_max`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn sf_model_double_integrator(u_max: f64, d_max: f64, dt: f64, out: *mut *mut SfModel) -> SfStatus {
    guard(|| give(out, SfModel(make_double_integrator(u_max, d_max, dt)?)))
}

/// # Safety
/// `model` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_model_state_dim(model: *const SfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.state_dim())
}

/// # Safety
/// `model` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_model_control_dim(model: *const SfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.control_dim())
}

/// # Safety
/// `model` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_model_disturbance_dim(model: *const SfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.disturbance_dim())
}

/// One step of the dynamics; `next` receives `state_dim` values.
///
/// # Safety
/// Pointers must be valid for their stated lengths; `next` for `state_dim` values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_step(
    model: *const SfModel,
    x: *const f64,
    nx: usize,
    u: *const f64,
    nu: usize,
    d: *const f64,
    nd: usize,
    next: *mut f64,
) -> SfStatus {
    guard(|| {
        let m = &reference("model", model)?.0;
        let x = input("x", x, nx, m.state_dim())?;
        let u = input("u", u, nu, m.control_dim())?;
        let d = input("d", d, nd, m.disturbance_dim())?;
        let out = output("next", next, m.state_dim())?;
        out.copy_from_slice(&m.step(x, u, d)?);
        Ok(())
    })
}

/// # Safety
/// `model` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    release(model)
}

/// Half-space margin `g(x) = normal . x + offset`.
///
/// # Safety
/// `normal` must point to `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_margin_halfspace(normal: *const f64, n: usize, offset: f64, out: *mut *mut SfMargin) -> SfStatus {
    guard(|| {
        let normal = input("normal", normal, n, n)?;
        give(out, SfMargin(margin_halfspace(normal.to_vec(), offset)?))
    })
}

/// # Safety
/// `margin` must be a valid handle; `x` must point to `n` values; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_margin_eval(margin: *const SfMargin, x: *const f64, n: usize, value: *mut f64) -> SfStatus {
    guard(|| {
        let g = &reference("margin", margin)?.0;
        let x = input("x", x, n, n)?;
        output("value", value, 1)?[0] = g.eval(x);
        Ok(())
    })
}

/// # Safety
/// `margin` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn sf_margin_free(margin: *mut SfMargin) {
    release(margin)
}

/// Solves the discrete safety game on a regular grid over `[lower, upper]`
/// with `shape[i]` nodes per axis and `u_counts`/`d_counts` candidates per
/// control/disturbance axis. The grid is returned even when iteration stops
/// at `max_iters`; `converged` tells which. Returns `SF_STATUS_NOT_CONVERGED`
/// in that case with `out` set.
///
/// # Safety
/// Array pointers must be valid for their lengths; `out` and `converged` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sf_grid_solve(
    model: *const SfModel,
    margin: *const SfMargin,
    lower: *const f64,
    upper: *const f64,
    shape: *const usize,
    n: usize,
    u_counts: *const usize,
    n_u: usize,
    d_counts: *const usize,
    n_d: usize,
    tolerance: f64,
    max_iters: usize,
    out: *mut *mut SfGrid,
    converged: *mut bool,
) -> SfStatus {
    let mut done = true;
    let status = guard(|| {
        let m = &reference("model", model)?.0;
        let g = &reference("margin", margin)?.0;
        let dim = m.state_dim();
        let domain = IntervalBox::new(
            input("lower", lower, n, dim)?.to_vec(),
            input("upper", upper, n, dim)?.to_vec(),
        )?;
        let spec = GridSpec::new(domain, counts("shape", shape, n)?.to_vec())?;
        let mut options =
            SolveOptions::new(counts("u_counts", u_counts, n_u)?.to_vec(), counts("d_counts", d_counts, n_d)?.to_vec());
        options.tolerance = tolerance;
        options.max_iters = max_iters;
        let flag = output("converged", converged, 1)?;
        let (grid, report) = solve(m, g, &spec, &options)?;
        flag[0] = report.converged;
        done = report.converged;
        give(out, SfGrid(Arc::new(grid)))
    });
    if status == SfStatus::Ok && !done {
        set_error("value iteration stopped before reaching the tolerance".into());
        return SfStatus::NotConverged;
    }
    status
}

/// Reads a grid written by [`sf_grid_save`] or the `solve` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_load(path_: *const c_char, out: *mut *mut SfGrid) -> SfStatus {
    guard(|| give(out, SfGrid(Arc::new(ValueGrid::load(path(path_)?)?))))
}

/// # Safety
/// `grid` must be a valid handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_save(grid: *const SfGrid, path_: *const c_char) -> SfStatus {
    guard(|| Ok(reference("grid", grid)?.0.save(path(path_)?)?))
}

/// Interpolated value at `x`; negative infinity outside the grid.
///
/// # Safety
/// `grid` must be a valid handle; `x` must point to `n` values; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_value(grid: *const SfGrid, x: *const f64, n: usize, value: *mut f64) -> SfStatus {
    guard(|| {
        let g = &reference("grid", grid)?.0;
        let x = input("x", x, n, g.spec().domain().dim())?;
        output("value", value, 1)?[0] = g.value_at(x);
        Ok(())
    })
}

/// # Safety
/// `grid` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_free(grid: *mut SfGrid) {
    release(grid)
}

/// Least-restrictive filter: passes a candidate while the worst-case grid
/// value of its successor is non-negative, otherwise applies the grid's
/// optimal safety control. The grid handle may be freed afterwards.
///
/// # Safety
/// Handles must be valid; count arrays must be valid for their lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_least_restrictive(
    model: *const SfModel,
    grid: *const SfGrid,
    u_counts: *const usize,
    n_u: usize,
    d_counts: *const usize,
    n_d: usize,
    out: *mut *mut SfFilter,
) -> SfStatus {
    guard(|| {
        let m = &reference("model", model)?.0;
        let g = reference("grid", grid)?.0.clone();
        let (u, d) = candidate_lattices(m, counts("u_counts", u_counts, n_u)?, counts("d_counts", d_counts, n_d)?)?;
        let filter = least_restrictive_filter(m, g, u, d)?;
        give(
            out,
            SfFilter {
                filter: Box::new(filter),
                state_dim: m.state_dim(),
                control_dim: m.control_dim(),
            },
        )
    })
}

/// Builds the `[filter]` of a TOML run configuration, solving its value
/// grid first when the filter needs one.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_from_config(path_: *const c_char, out: *mut *mut SfFilter) -> SfStatus {
    guard(|| {
        let config = RunConfig::load(path(path_)?)?;
        let model = config.build_model()?;
        let grid = if RunConfig::needs_grid(&config.filter) {
            let (grid, report) = solve(&model, &config.build_margin()?, &config.grid_spec()?, &config.solve_options()?)?;
            if !report.converged {
                return Err(Failure(SfStatus::NotConverged, "value iteration stopped before reaching the tolerance".into()));
            }
            Some(Arc::new(grid))
        } else {
            None
        };
        let filter = config.build_filter(&config.filter, &model, grid.as_ref())?;
        give(
            out,
            SfFilter {
                filter,
                state_dim: model.state_dim(),
                control_dim: model.control_dim(),
            },
        )
    })
}

/// # Safety
/// `filter` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_state_dim(filter: *const SfFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.state_dim)
}

/// # Safety
/// `filter` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_control_dim(filter: *const SfFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.control_dim)
}

/// Monitor value of candidate `u` at `x`: non-negative means it would pass.
///
/// # Safety
/// `filter` must be a valid handle; `x`, `u` valid for `nx`, `nu`; `value` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_monitor(
    filter: *const SfFilter,
    x: *const f64,
    nx: usize,
    u: *const f64,
    nu: usize,
    value: *mut f64,
) -> SfStatus {
    guard(|| {
        let f = reference("filter", filter)?;
        let x = input("x", x, nx, f.state_dim)?;
        let u = input("u", u, nu, f.control_dim)?;
        output("value", value, 1)?[0] = f.filter.monitor(x, u);
        Ok(())
    })
}

/// Filters candidate `u` at `x`. `applied` receives `control_dim` values;
/// `overridden` and `monitor_value` may be null.
///
/// # Safety
/// `filter` must be a valid, exclusively used handle; pointers valid for their lengths.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sf_filter_apply(
    filter: *mut SfFilter,
    x: *const f64,
    nx: usize,
    u: *const f64,
    nu: usize,
    applied: *mut f64,
    overridden: *mut bool,
    monitor_value: *mut f64,
) -> SfStatus {
    guard(|| {
        let f = filter.as_mut().ok_or_else(|| null("filter"))?;
        let x = input("x", x, nx, f.state_dim)?;
        let u = input("u", u, nu, f.control_dim)?;
        let out = output("applied", applied, f.control_dim)?;
        let decision = decide(f.filter.as_mut(), x, u);
        out.copy_from_slice(&decision.applied);
        if let Some(o) = overridden.as_mut() {
            *o = decision.overridden;
        }
        if let Some(m) = monitor_value.as_mut() {
            *m = decision.monitor_value;
        }
        Ok(())
    })
}

/// Whether the filter certifies `x` as a start state.
///
/// # Safety
/// `filter` must be a valid handle; `x` valid for `nx`; `certified` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_certifies(filter: *const SfFilter, x: *const f64, nx: usize, certified: *mut bool) -> SfStatus {
    guard(|| {
        let f = reference("filter", filter)?;
        let x = input("x", x, nx, f.state_dim)?;
        output("certified", certified, 1)?[0] = f.filter.certifies(x);
        Ok(())
    })
}

/// Forgets episode-local state such as cached plans.
///
/// # Safety
/// `filter` must be a valid, exclusively used handle.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_reset(filter: *mut SfFilter) -> SfStatus {
    guard(|| {
        filter.as_mut().ok_or_else(|| null("filter"))?.filter.reset();
        Ok(())
    })
}

/// # Safety
/// `filter` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn sf_filter_free(filter: *mut SfFilter) {
    release(filter)
}
