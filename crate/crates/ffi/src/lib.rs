//! C interface to the stationary solver and the stability experiment.
//!
//! Every call returns a [`TsStatus`]; on failure the message is available
//! from [`ts_last_error`] on the same thread. Handles are created by the
//! `*_new` functions and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tumorstab::experiments::{run_stability_experiment, ExperimentError, RunConfig, StabilityRun};
use tumorstab::kinetics::{validate_hypotheses, ConsumptionLaw, KineticsSpec};
use tumorstab::stationary::{solve_stationary, StationarySolution};
use tumorstab::RadialGrid;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Rate parameters of the affine kinetics family.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsKinetics {
    pub lambda: f64,
    pub b_rate: f64,
    pub d_rate: f64,
    pub p_rate: f64,
    pub q_rate: f64,
    /// 0 for `F = lambda c`, 1 for `F = lambda c / (1 + c)`.
    pub consumption: u32,
}

/// Headline numbers of a finished stability run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsSummary {
    pub epsilon: f64,
    pub z_star: f64,
    /// NaN when the fit failed.
    pub mu_fit_x: f64,
    pub mu_fit_x0: f64,
    pub k_x: f64,
    pub samples: usize,
    pub pass: bool,
}

pub struct TsStationary {
    inner: StationarySolution,
}

pub struct TsExperiment {
    config: RunConfig,
    last: Option<StabilityRun>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn guard(f: impl FnOnce() -> Result<(), (TsStatus, String)>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

fn experiment_status(e: &ExperimentError) -> TsStatus {
    if e.exit_code() == 3 {
        TsStatus::Config
    } else {
        TsStatus::Solver
    }
}

fn to_spec(k: &TsKinetics) -> Result<KineticsSpec, (TsStatus, String)> {
    let consumption = match k.consumption {
        0 => ConsumptionLaw::Linear,
        1 => ConsumptionLaw::Saturating,
        n => return Err((TsStatus::InvalidArgument, format!("unknown consumption law {n}"))),
    };
    let spec = KineticsSpec {
        lambda: k.lambda,
        b_rate: k.b_rate,
        d_rate: k.d_rate,
        p_rate: k.p_rate,
        q_rate: k.q_rate,
        consumption,
    };
    let report = validate_hypotheses(&spec);
    if !report.all_passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        return Err((TsStatus::Config, format!("kinetics violate: {}", failed.join(", "))));
    }
    Ok(spec)
}

/// Default kinetics parameters.
#[no_mangle]
pub extern "C" fn ts_kinetics_default() -> TsKinetics {
    let s = KineticsSpec::default();
    TsKinetics { lambda: s.lambda, b_rate: s.b_rate, d_rate: s.d_rate, p_rate: s.p_rate, q_rate: s.q_rate, consumption: 0 }
}

/// Copy the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Solve for the stationary tumor on a uniform grid of `grid_size` nodes.
///
/// # Safety
/// `kinetics` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ts_stationary_new(
    kinetics: *const TsKinetics,
    grid_size: usize,
    out: *mut *mut TsStationary,
) -> TsStatus {
    if kinetics.is_null() || out.is_null() {
        set_error("null argument");
        return TsStatus::NullPointer;
    }
    let k = *kinetics;
    guard(|| {
        let spec = to_spec(&k)?;
        let grid = RadialGrid::uniform(grid_size).map_err(|e| (TsStatus::InvalidArgument, e.to_string()))?;
        let inner = solve_stationary(&spec, (-2.0, 2.0), &grid).map_err(|e| (TsStatus::Solver, e.to_string()))?;
        *out = Box::into_raw(Box::new(TsStationary { inner }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`ts_stationary_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_stationary_free(handle: *mut TsStationary) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Stationary log-radius `z_*`, NaN for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_stationary_z_star(handle: *const TsStationary) -> f64 {
    handle.as_ref().map_or(f64::NAN, |h| h.inner.z_star)
}

/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_stationary_len(handle: *const TsStationary) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.grid().len())
}

/// Copy `r`, `c_*` and `p_*` on the grid nodes into caller buffers of
/// length `len`; any of them may be null.
///
/// # Safety
/// Non-null buffers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_stationary_profiles(
    handle: *const TsStationary,
    r: *mut f64,
    c: *mut f64,
    p: *mut f64,
    len: usize,
) -> TsStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null handle");
        return TsStatus::NullPointer;
    };
    let sol = &h.inner;
    let n = sol.grid().len();
    if len < n {
        set_error(format!("buffer holds {len} values, {n} needed"));
        return TsStatus::BufferTooSmall;
    }
    for (dst, src) in [(r, sol.grid().nodes()), (c, sol.c_star.values()), (p, sol.p_star.values())] {
        if !dst.is_null() {
            ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
        }
    }
    TsStatus::Ok
}

/// Parse a run configuration; `toml` may be null for the defaults.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_experiment_new(toml: *const c_char, out: *mut *mut TsExperiment) -> TsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return TsStatus::NullPointer;
    }
    let text = if toml.is_null() {
        None
    } else {
        match CStr::from_ptr(toml).to_str() {
            Ok(s) => Some(s.to_owned()),
            Err(_) => {
                set_error("configuration is not UTF-8");
                return TsStatus::InvalidArgument;
            }
        }
    };
    guard(|| {
        let config = match text {
            Some(t) => RunConfig::from_toml(&t).map_err(|e| (experiment_status(&e), e.to_string()))?,
            None => RunConfig::default(),
        };
        config.validate().map_err(|e| (experiment_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(TsExperiment { config, last: None }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`ts_experiment_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_experiment_free(handle: *mut TsExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Replace the perturbation amplitude of the configuration.
///
/// # Safety
/// `handle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_experiment_set_amplitude(handle: *mut TsExperiment, epsilon: f64) -> TsStatus {
    let Some(h) = handle.as_mut() else {
        set_error("null handle");
        return TsStatus::NullPointer;
    };
    let cfg = h.config.with_amplitude(epsilon);
    if let Err(e) = cfg.validate() {
        set_error(e.to_string());
        return experiment_status(&e);
    }
    h.config = cfg;
    TsStatus::Ok
}

/// Run the experiment and fill `summary`. A failed inequality is not an
/// error; check `summary.pass`.
///
/// # Safety
/// `handle` must be a live handle and `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_experiment_run(handle: *mut TsExperiment, summary: *mut TsSummary) -> TsStatus {
    let (Some(h), false) = (handle.as_mut(), summary.is_null()) else {
        set_error("null argument");
        return TsStatus::NullPointer;
    };
    guard(|| {
        let run = run_stability_experiment(&h.config).map_err(|e| (experiment_status(&e), e.to_string()))?;
        let rep = &run.report;
        *summary = TsSummary {
            epsilon: rep.epsilon,
            z_star: rep.z_star,
            mu_fit_x: rep.fit_x.as_ref().map_or(f64::NAN, |d| d.mu_fit),
            mu_fit_x0: rep.fit_x0.as_ref().map_or(f64::NAN, |d| d.mu_fit),
            k_x: rep.k_x.unwrap_or(f64::NAN),
            samples: run.trajectory.len(),
            pass: rep.pass,
        };
        h.last = Some(run);
        Ok(())
    })
}

/// Copy the sampled times and `normX` of the last run.
///
/// # Safety
/// Non-null buffers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_experiment_norms(
    handle: *const TsExperiment,
    times: *mut f64,
    norm_x: *mut f64,
    len: usize,
) -> TsStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null handle");
        return TsStatus::NullPointer;
    };
    let Some(run) = &h.last else {
        set_error("experiment has not been run");
        return TsStatus::InvalidArgument;
    };
    let traj = &run.trajectory;
    if len < traj.len() {
        set_error(format!("buffer holds {len} values, {} needed", traj.len()));
        return TsStatus::BufferTooSmall;
    }
    for (dst, src) in [(times, &traj.times), (norm_x, &traj.norm_x)] {
        if !dst.is_null() {
            ptr::copy_nonoverlapping(src.as_ptr(), dst, traj.len());
        }
    }
    TsStatus::Ok
}
