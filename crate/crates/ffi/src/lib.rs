//! C interface to the xevent library.
//!
//! Objects cross the boundary as opaque handles created by `xe_*_new`-style
//! functions and released with the matching `xe_*_free`. Every fallible call
//! returns an [`XeStatus`]; the message of the most recent failure on the
//! calling thread is available from [`xe_last_error`].
//!
//! # Safety
//!
//! Pointer arguments must be NULL or valid for the access implied by the
//! signature: handles must come from this library and not yet be freed,
//! strings must be NUL-terminated, and `(buf, cap)` must describe writable
//! storage for `cap` elements. NULL is detected and reported; dangling
//! pointers are not.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use xevent::assimilate::{self, BeliefPath};
use xevent::infodiag;
use xevent::models::demote;
use xevent::pipeline::config::{BuiltModel, Example, ModelBlock};
use xevent::pipeline::{run_pipeline, PipelineConfig};
use xevent::simulate::{self, Trajectory};
use xevent::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid configuration, parameters or arguments.
    InvalidArgument = 2,
    /// Divergence, assimilation breakdown or optimizer failure.
    Numerical = 3,
    /// A required upstream artifact is missing.
    Dependency = 4,
    /// File system or parse failure.
    Io = 5,
    /// The library panicked; the handle arguments are left untouched.
    Panic = 6,
}

/// Opaque model handle.
pub struct XeModel {
    inner: BuiltModel,
}

/// Opaque trajectory handle.
pub struct XeTrajectory {
    inner: Trajectory,
}

/// Opaque belief-path handle (filter or smoother).
pub struct XeBeliefPath {
    inner: BeliefPath,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> XeStatus {
    match e.exit_code() {
        2 => XeStatus::InvalidArgument,
        3 => XeStatus::Numerical,
        4 => XeStatus::Dependency,
        _ => XeStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), XeStatus>) -> XeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            XeStatus::Panic
        }
    }
}

fn fail(e: Error) -> XeStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null() -> XeStatus {
    set_error("null pointer argument");
    XeStatus::NullPointer
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, XeStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        XeStatus::InvalidArgument
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], XeStatus> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null()),
        (false, _) => Ok(std::slice::from_raw_parts(p, len)),
    }
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, XeStatus> {
    p.as_ref().ok_or_else(null)
}

/// Copies `src` into `buf` when it fits and always reports the full length.
unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> Result<(), XeStatus> {
    if !len.is_null() {
        *len = src.len();
    }
    if buf.is_null() {
        return if len.is_null() { Err(null()) } else { Ok(()) };
    }
    if cap < src.len() {
        set_error(format!("buffer holds {cap} values, {} needed", src.len()));
        return Err(XeStatus::InvalidArgument);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

unsafe fn publish<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn xe_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Builds one of the named examples (`intermittent`, `damping_forcing`,
/// `topographic`, `linear`). `params_json` is a JSON object of overrides
/// and may be NULL.
#[no_mangle]
pub unsafe extern "C" fn xe_model_new(
    example: *const c_char,
    params_json: *const c_char,
    out: *mut *mut XeModel,
) -> XeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let name = text(example)?;
        let example: Example = serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| fail(Error::Config(format!("unknown example `{name}`"))))?;
        let params = if params_json.is_null() {
            Default::default()
        } else {
            serde_json::from_str(text(params_json)?).map_err(|e| fail(Error::Config(e.to_string())))?
        };
        let inner = ModelBlock { example, params }.build().map_err(fail)?;
        publish(out, XeModel { inner });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xe_model_free(model: *mut XeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Observed and hidden dimensions.
#[no_mangle]
pub unsafe extern "C" fn xe_model_dims(model: *const XeModel, dim_obs: *mut usize, dim_hidden: *mut usize) -> XeStatus {
    guard(|| {
        let m = handle(model)?;
        if dim_obs.is_null() || dim_hidden.is_null() {
            return Err(null());
        }
        (*dim_obs, *dim_hidden) = m.inner.dims();
        Ok(())
    })
}

/// Integrates `n_steps` Euler–Maruyama steps from `(x0, y0)`.
#[no_mangle]
pub unsafe extern "C" fn xe_simulate(
    model: *const XeModel,
    x0: *const f64,
    x0_len: usize,
    y0: *const f64,
    y0_len: usize,
    dt: f64,
    n_steps: usize,
    seed: u64,
    out: *mut *mut XeTrajectory,
) -> XeStatus {
    guard(|| {
        let m = handle(model)?;
        if out.is_null() {
            return Err(null());
        }
        let (x0, y0) = (slice(x0, x0_len)?, slice(y0, y0_len)?);
        let traj = match &m.inner {
            BuiltModel::Cgns(c) => simulate::integrate(&demote(c.as_ref()), x0, y0, dt, n_steps, seed),
            BuiltModel::Topographic(t) => simulate::integrate(t, x0, y0, dt, n_steps, seed),
        }
        .map_err(fail)?;
        publish(out, XeTrajectory { inner: traj });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xe_trajectory_free(traj: *mut XeTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of grid points.
#[no_mangle]
pub unsafe extern "C" fn xe_trajectory_len(traj: *const XeTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Observed component `j` over the grid. With `buf` NULL only `len` is set.
#[no_mangle]
pub unsafe extern "C" fn xe_trajectory_obs(
    traj: *const XeTrajectory,
    j: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> XeStatus {
    guard(|| {
        let t = &handle(traj)?.inner;
        if j >= t.dim_obs {
            return Err(fail(Error::Argument(format!("observed component {j} out of range"))));
        }
        copy_out(&t.obs_series(j), buf, cap, len)
    })
}

/// Hidden truth component `j` over the grid.
#[no_mangle]
pub unsafe extern "C" fn xe_trajectory_hidden(
    traj: *const XeTrajectory,
    j: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> XeStatus {
    guard(|| {
        let t = &handle(traj)?.inner;
        let series = t
            .hidden_series(j)
            .filter(|_| j < t.dim_hidden)
            .ok_or_else(|| fail(Error::Argument(format!("hidden component {j} unavailable"))))?;
        copy_out(&series, buf, cap, len)
    })
}

fn cgns(m: &XeModel) -> Result<&dyn xevent::models::CgnsModel, XeStatus> {
    match &m.inner {
        BuiltModel::Cgns(c) => Ok(c.as_ref()),
        BuiltModel::Topographic(_) => {
            Err(fail(Error::UnsupportedStage { stage: "assimilate".into(), model: "topographic".into() }))
        }
    }
}

/// Conditional Gaussian filter along `traj`.
#[no_mangle]
pub unsafe extern "C" fn xe_filter(
    model: *const XeModel,
    traj: *const XeTrajectory,
    out: *mut *mut XeBeliefPath,
) -> XeStatus {
    guard(|| {
        let (m, t) = (cgns(handle(model)?)?, &handle(traj)?.inner);
        if out.is_null() {
            return Err(null());
        }
        let f = assimilate::filter(m, t).map_err(fail)?;
        publish(out, XeBeliefPath { inner: f });
        Ok(())
    })
}

/// Fixed-interval smoother from a filter computed on the same trajectory.
#[no_mangle]
pub unsafe extern "C" fn xe_smooth(
    model: *const XeModel,
    traj: *const XeTrajectory,
    filter: *const XeBeliefPath,
    out: *mut *mut XeBeliefPath,
) -> XeStatus {
    guard(|| {
        let (m, t, f) = (cgns(handle(model)?)?, &handle(traj)?.inner, &handle(filter)?.inner);
        if out.is_null() {
            return Err(null());
        }
        let s = assimilate::smooth(m, t, f).map_err(fail)?;
        publish(out, XeBeliefPath { inner: s });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xe_belief_path_free(path: *mut XeBeliefPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

#[no_mangle]
pub unsafe extern "C" fn xe_belief_path_len(path: *const XeBeliefPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn xe_belief_path_dim(path: *const XeBeliefPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.dim())
}

/// Mean at grid point `n` (length = dim).
#[no_mangle]
pub unsafe extern "C" fn xe_belief_mean(
    path: *const XeBeliefPath,
    n: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> XeStatus {
    guard(|| {
        let p = &handle(path)?.inner;
        let b = p.beliefs.get(n).ok_or_else(|| fail(Error::Argument(format!("grid index {n} out of range"))))?;
        copy_out(b.mean.as_slice(), buf, cap, len)
    })
}

/// Covariance at grid point `n`, row-major (length = dim²).
#[no_mangle]
pub unsafe extern "C" fn xe_belief_cov(
    path: *const XeBeliefPath,
    n: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> XeStatus {
    guard(|| {
        let p = &handle(path)?.inner;
        let b = p.beliefs.get(n).ok_or_else(|| fail(Error::Argument(format!("grid index {n} out of range"))))?;
        copy_out(&xevent::linalg::row_major(&b.cov), buf, cap, len)
    })
}

/// `KL(smoother ‖ filter)` at every grid point.
#[no_mangle]
pub unsafe extern "C" fn xe_kl_filter_smoother(
    smoother: *const XeBeliefPath,
    filter: *const XeBeliefPath,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> XeStatus {
    guard(|| {
        let (s, f) = (&handle(smoother)?.inner, &handle(filter)?.inner);
        let kl = infodiag::kl_series_filter_smoother(s, f).map_err(fail)?;
        copy_out(&kl.values, buf, cap, len)
    })
}

/// Runs the full pipeline for the JSON config at `config_path`, writing into
/// `out_dir` (NULL uses the config's `output.directory`).
#[no_mangle]
pub unsafe extern "C" fn xe_run_pipeline(config_path: *const c_char, out_dir: *const c_char) -> XeStatus {
    guard(|| {
        let cfg = PipelineConfig::load(&PathBuf::from(text(config_path)?)).map_err(fail)?;
        let out = if out_dir.is_null() {
            cfg.output.directory.clone().ok_or_else(|| fail(Error::Config("no output directory given".into())))?
        } else {
            PathBuf::from(text(out_dir)?)
        };
        run_pipeline(cfg, out).map(|_| ()).map_err(fail)
    })
}
