//! Stationary solution `(c_*, p_*, u_*, z_*)` by shooting on the log-radius.
//!
//! For a trial `z` the pair `u p' = f(c, p)`, `(r^2 u)' = g(c, p) r^2` is
//! integrated inward from `r = 1`, where `u(1) = 0` and `p(1) = 1` form the
//! only bounded branch, down to the first positive node. The center value
//! `p(0)` is the attracting root of `f(c(0), p) = 0`. The mismatch is the
//! discrete mass integral `int_0^1 g r^2`, computed with the same quadrature
//! the velocity module uses, so the assembled `u_*` vanishes at `r = 1` to
//! round-off.

use serde::Serialize;
use thiserror::Error;

use crate::field::{lagrange_derivative, GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::KineticsSpec;
use crate::nutrient::{solve_nutrient, solve_sensitivity, NutrientError, NutrientSolution};
use crate::ode::{integrate, OdeError, Stop, Tolerance};
use crate::velocity::{integrate_velocity, velocity_from_density, VelocityError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error(transparent)]
    Nutrient(#[from] NutrientError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Velocity(#[from] VelocityError),
    #[error("no root of f(c0, p) = 0 in (0, 1] for c0 = {c0}")]
    NoBoundaryRoot { c0: f64 },
    #[error("p left [0, 1] at r = {r} (p = {p})")]
    LeftUnitInterval { r: f64, p: f64 },
    #[error("no sign change of the shooting function on [{z_lo}, {z_hi}]: samples {samples:?}")]
    Bracket { z_lo: f64, z_hi: f64, samples: Vec<(f64, Option<f64>)> },
    #[error("shooting did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

/// Attracting root in `(0, 1]` of `K_P + (K_M - K_N) p - K_M p^2`.
pub fn boundary_root(spec: &KineticsSpec, c0: f64) -> Result<f64, StationaryError> {
    let rv = spec.rates(c0);
    let (a, b, c) = (-rv.km, rv.km - rv.kn, rv.kp);
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) || a == 0.0 {
        return Err(StationaryError::NoBoundaryRoot { c0 });
    }
    let sq = disc.sqrt();
    // Stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![];
    if q != 0.0 {
        roots.push(q / a);
        roots.push(c / q);
    } else {
        roots.push(0.0);
    }
    let tol = 1e-14;
    roots
        .into_iter()
        .filter(|&p| p > tol && p <= 1.0 + tol)
        .filter(|&p| spec.reaction_partials(c0, p).0 < 0.0)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |q| q.max(p))))
        .map(|p| p.min(1.0))
        .ok_or(StationaryError::NoBoundaryRoot { c0 })
}

/// Controls for one inward integration.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    /// Distance from `r = 1` where the series start is placed.
    pub start_offset: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { start_offset: 1e-6, rtol: 1e-12, atol: 1e-15 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileDiagnostics {
    /// Largest value of `u` at interior nodes; negative for a physical `z`.
    pub max_interior_u: f64,
    /// Radius where `r^2 u` turned non-negative, when it did.
    pub turned_at: Option<f64>,
    /// Every nodal increment of `p` is non-negative.
    pub monotone: bool,
    /// Discrete `int_0^1 g r^2`; zero at the stationary radius.
    pub mismatch: Option<f64>,
}

/// Result of one inward integration at fixed `z`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub z: f64,
    pub nutrient: NutrientSolution,
    /// Nodal `p`, with `p(0)` from [`boundary_root`] and `p(1) = 1`.
    pub p: Vec<f64>,
    /// Nodal `p' = f/u` from the integrated system.
    pub p_prime: Vec<f64>,
    /// Nodal `u = v/r^2` from the integrated system.
    pub u: Vec<f64>,
    pub diagnostics: ProfileDiagnostics,
}

impl Profile {
    pub fn p_field(&self) -> RadialField {
        RadialField::new(self.nutrient.grid().clone(), self.p.clone(), Interpolation::Cubic)
            .expect("profile values are finite")
    }

    pub fn u_field(&self) -> RadialField {
        RadialField::new(self.nutrient.grid().clone(), self.u.clone(), Interpolation::Cubic)
            .expect("profile values are finite")
    }
}

/// Integrate the stationary pair inward from `r = 1` at log-radius `z`.
pub fn integrate_profile(
    spec: &KineticsSpec,
    z: f64,
    grid: &RadialGrid,
    opts: ShootingOptions,
) -> Result<Profile, StationaryError> {
    let nutrient = solve_nutrient(spec, z, grid)?;
    let r = grid.nodes();
    let m = r.len();
    let c = &nutrient.c;
    let cp1 = nutrient.c_prime.values()[m - 1];

    // Series at r = 1 in s = 1 - r.
    let rv1 = spec.rates(1.0);
    let g1 = spec.growth(1.0, 1.0);
    let (fp1, fc1) = spec.reaction_partials(1.0, 1.0);
    let p1 = fc1 * cp1 / (g1 - fp1);
    let gprime1 = (-rv1.kd_d + rv1.km_d) * cp1 + rv1.km * p1;
    let s = opts.start_offset.min(0.5 * (r[m - 1] - r[m - 2]));
    let mut y = [1.0 - p1 * s, -g1 * s + 0.5 * (gprime1 + 2.0 * g1) * s * s];

    let mut p = vec![0.0; m];
    let mut pp = vec![0.0; m];
    let mut u = vec![0.0; m];
    p[m - 1] = 1.0;
    pp[m - 1] = p1;

    let rhs = |x: f64, y: &[f64], d: &mut [f64]| {
        let cv = c.eval(x).clamp(0.0, 1.0);
        let uu = y[1] / (x * x);
        d[0] = spec.reaction(cv, y[0]) / uu;
        d[1] = spec.growth(cv, y[0]) * x * x;
    };
    let tol = Tolerance { rtol: opts.rtol, atol: opts.atol, ..Default::default() };
    let mut from = 1.0 - s;
    let mut turned_at = None;
    let mut escaped = None;
    for i in (1..m - 1).rev() {
        let outcome = integrate(rhs, from, r[i], &mut y, tol, |x, y, _| {
            if y[1] >= 0.0 {
                return false;
            }
            if y[0] < -1e-12 || y[0] > 1.0 + 1e-12 {
                escaped = Some((x, y[0]));
                return false;
            }
            true
        });
        // As r^2 u approaches zero from below, p' = f/u blows up and the
        // step size collapses just before the turning point.
        let stop = match outcome {
            Ok(s) => s,
            Err(OdeError::StepUnderflow { t }) | Err(OdeError::NonFinite { t }) => Stop::Halted { t },
            Err(e) => return Err(e.into()),
        };
        if let Stop::Halted { t } = stop {
            if let Some((x, pv)) = escaped {
                return Err(StationaryError::LeftUnitInterval { r: x, p: pv });
            }
            turned_at = Some(t);
            break;
        }
        p[i] = y[0];
        u[i] = y[1] / (r[i] * r[i]);
        let cv = c.values()[i];
        pp[i] = spec.reaction(cv, y[0]) / u[i];
        from = r[i];
    }

    let mut mismatch = None;
    let mut monotone = true;
    let mut max_u = f64::NEG_INFINITY;
    if turned_at.is_none() {
        p[0] = boundary_root(spec, c.values()[0])?;
        let density: Vec<f64> = c.values().iter().zip(&p).map(|(&cv, &pv)| spec.growth(cv, pv)).collect();
        let mut uq = vec![0.0; m];
        mismatch = Some(integrate_velocity(r, &density, &mut uq));
        monotone = p.windows(2).all(|w| w[1] >= w[0]);
        max_u = u[1..m - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // p' ~ r^(beta-1) at the center; finite only when beta >= 1.
        let rv0 = spec.rates(c.values()[0]);
        let du0 = spec.growth(c.values()[0], p[0]) / 3.0;
        let beta = (rv0.km - rv0.kn - 2.0 * rv0.km * p[0]) / du0;
        pp[0] = if beta > 1.0 { 0.0 } else { lagrange_derivative(&r[..5], &p[..5], 0) };
    }
    Ok(Profile {
        z,
        nutrient,
        p,
        p_prime: pp,
        u,
        diagnostics: ProfileDiagnostics { max_interior_u: max_u, turned_at, monotone, mismatch },
    })
}

/// Shooting function: the discrete mass integral, or `None` when the
/// integration turned back (which happens only for too large `z`, where the
/// integral would be negative).
pub fn shooting_function(
    spec: &KineticsSpec,
    z: f64,
    grid: &RadialGrid,
    opts: ShootingOptions,
) -> Result<Option<f64>, StationaryError> {
    Ok(integrate_profile(spec, z, grid, opts)?.diagnostics.mismatch)
}

fn sign_of(v: Option<f64>) -> f64 {
    match v {
        Some(x) => x.signum(),
        None => -1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExponentClass {
    /// `p_*'` stays bounded at the center.
    C1AtOrigin,
    /// `p_*'` blows up like `r^alpha` with `-1 < alpha < 0`.
    SingularDerivative,
    /// The log-log fit was too poor to classify.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub alpha_hat: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub class: ExponentClass,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub nutrient: f64,
    /// Max interior `|u_* p_*' - f|` with `p_*'` by nodal differences.
    pub transport: f64,
    /// Max interior `|u_*' + 2u_*/r - g|` with nodal differences.
    pub velocity: f64,
    pub u_center: f64,
    pub u_boundary: f64,
    /// Cubic extrapolation of `p_*` to `r = 1` from interior nodes.
    pub p_boundary_extrapolated: f64,
    /// Max gap between the integrated and the quadrature `r^2 u_*`.
    pub u_consistency: f64,
    pub checks: Vec<ProfileCheck>,
    /// Fitted `C_1 >= -u_*/(r(1-r)) >= C_2 > 0`.
    pub u_bound_c1: f64,
    pub u_bound_c2: f64,
}

impl ResidualReport {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub spec: KineticsSpec,
    pub z_star: f64,
    /// `R_* = e^{z_*}`.
    pub r_star: f64,
    pub nutrient: NutrientSolution,
    pub c_star: RadialField,
    pub c_prime: RadialField,
    pub c_z: RadialField,
    /// Hermite field carrying the integrated slopes `p_*'`.
    pub p_star: RadialField,
    pub p_prime: RadialField,
    pub u_star: RadialField,
    /// `u_*/(r(1-r))` with its endpoint limits.
    pub theta_star: RadialField,
    pub p0: f64,
    /// Center exponent `f_p(0, p0)/u_*'(0)` of the linearized center problem.
    pub beta: f64,
    pub exponent: ExponentFit,
    pub residual_report: ResidualReport,
    pub warnings: Vec<String>,
}

impl StationarySolution {
    pub fn grid(&self) -> &RadialGrid {
        self.p_star.grid()
    }

    /// `u_*'(0)` and `u_*'(1)`.
    pub fn endpoint_slopes(&self) -> (f64, f64) {
        let t = self.theta_star.values();
        (t[0], -t[t.len() - 1])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions {
    pub shooting: ShootingOptions,
    /// Sample count of the initial sign scan.
    pub scan_points: usize,
    pub z_tol: f64,
    pub max_iterations: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { shooting: ShootingOptions::default(), scan_points: 9, z_tol: 1e-14, max_iterations: 200 }
    }
}

pub fn solve_stationary(
    spec: &KineticsSpec,
    z_bracket: (f64, f64),
    grid: &RadialGrid,
) -> Result<StationarySolution, StationaryError> {
    solve_stationary_with(spec, z_bracket, grid, StationaryOptions::default())
}

pub fn solve_stationary_with(
    spec: &KineticsSpec,
    z_bracket: (f64, f64),
    grid: &RadialGrid,
    opts: StationaryOptions,
) -> Result<StationarySolution, StationaryError> {
    let (z_lo, z_hi) = z_bracket;
    let n = opts.scan_points.max(2);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let z = z_lo + (z_hi - z_lo) * k as f64 / (n - 1) as f64;
        samples.push((z, shooting_function(spec, z, grid, opts.shooting)?));
    }
    let changes: Vec<usize> =
        (0..n - 1).filter(|&k| sign_of(samples[k].1) != sign_of(samples[k + 1].1)).collect();
    let Some(&first) = changes.first() else {
        return Err(StationaryError::Bracket { z_lo, z_hi, samples });
    };
    let mut warnings = vec![];
    if changes.len() > 1 {
        warnings.push(format!("shooting function changes sign {} times on the bracket", changes.len()));
    }
    let (mut a, mut fa) = samples[first];
    let (mut b, mut fb) = samples[first + 1];

    // Bisection until both ends carry values, then Brent.
    let mut iterations = 0;
    while fa.is_none() || fb.is_none() {
        if (b - a).abs() < opts.z_tol || iterations >= opts.max_iterations {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = shooting_function(spec, mid, grid, opts.shooting)?;
        if sign_of(fm) == sign_of(fa) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
        iterations += 1;
    }
    let z_star = match (fa, fb) {
        (Some(va), Some(vb)) => brent(
            |z| shooting_function(spec, z, grid, opts.shooting).map(|v| v.unwrap_or(-1.0)),
            a,
            b,
            va,
            vb,
            opts.z_tol,
            opts.max_iterations,
        )?,
        _ => 0.5 * (a + b),
    };
    let profile = integrate_profile(spec, z_star, grid, opts.shooting)?;
    if profile.diagnostics.mismatch.is_none() {
        return Err(StationaryError::NoConvergence { iterations: opts.max_iterations });
    }
    assemble(spec, profile, warnings)
}

fn brent<F>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64, max_iter: usize) -> Result<f64, StationaryError>
where
    F: FnMut(f64) -> Result<f64, StationaryError>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let mid = 0.5 * (c - b);
        if mid.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * mid * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * mid * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * mid * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = mid;
                e = d;
            }
        } else {
            d = mid;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(mid) };
        fb = f(b)?;
    }
    Err(StationaryError::NoConvergence { iterations: max_iter })
}

fn assemble(spec: &KineticsSpec, profile: Profile, warnings: Vec<String>) -> Result<StationarySolution, StationaryError> {
    let grid = profile.nutrient.grid().clone();
    let r = grid.nodes();
    let m = r.len();
    let cv = profile.nutrient.c.values().to_vec();
    let density: Vec<f64> = cv.iter().zip(&profile.p).map(|(&c, &p)| spec.growth(c, p)).collect();
    let vel = velocity_from_density(&grid, density.clone())?;
    let p_star = RadialField::with_slopes(grid.clone(), profile.p.clone(), profile.p_prime.clone())?;
    let p_prime = RadialField::new(grid.clone(), profile.p_prime.clone(), Interpolation::Cubic)?;
    let c_z = solve_sensitivity(spec, &profile.nutrient)?;
    let p0 = profile.p[0];
    let rv0 = spec.rates(cv[0]);
    let du0 = vel.w_over_weight.values()[0];
    let beta = (rv0.km - rv0.kn - 2.0 * rv0.km * p0) / du0;

    // Residuals with nodal differences.
    let dp = lagrange_slopes_of(r, &profile.p);
    let uv = vel.u.values();
    let du = lagrange_slopes_of(r, uv);
    let mut transport = 0.0f64;
    let mut velocity = 0.0f64;
    let mut u_consistency = 0.0f64;
    for i in 1..m - 1 {
        transport = transport.max((uv[i] * dp[i] - spec.reaction(cv[i], profile.p[i])).abs());
        velocity = velocity.max((du[i] + 2.0 * uv[i] / r[i] - density[i]).abs());
        u_consistency = u_consistency.max(r[i] * r[i] * (uv[i] - profile.u[i]).abs());
    }
    let k = m - 1;
    let p_ext = {
        let xs = [r[k - 1], r[k - 2], r[k - 3], r[k - 4]];
        let ys = [profile.p[k - 1], profile.p[k - 2], profile.p[k - 3], profile.p[k - 4]];
        lagrange_at(&xs, &ys, 1.0)
    };

    let mut checks = vec![];
    let mut push = |name: &str, passed: bool, value: f64| checks.push(ProfileCheck { name: name.into(), passed, value });
    let cmin = cv.iter().cloned().fold(f64::INFINITY, f64::min);
    push("c_*(0) > 0", cv[0] > 0.0, cv[0]);
    push("c_*(0) <= c_* <= 1", (cmin - cv[0]).abs() <= 0.0 && cv.iter().all(|&c| c <= 1.0), cmin);
    let cpv = profile.nutrient.c_prime.values();
    let min_cp = cpv[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    push("c_*' > 0", min_cp > 0.0, min_cp);
    let pmin = profile.p.iter().cloned().fold(f64::INFINITY, f64::min);
    let pmax = profile.p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    push("p0 > 0", p0 > 0.0, p0);
    push("p0 <= p_* <= 1", pmin >= p0 && pmax <= 1.0, pmax);
    let min_pp = profile.p_prime[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    push("p_*' > 0", min_pp > 0.0, min_pp);
    let max_u = uv[1..m - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    push("u_* < 0", max_u < 0.0, max_u);
    let theta = vel.w_over_weight.values();
    let c1 = theta.iter().map(|t| -t).fold(f64::NEG_INFINITY, f64::max);
    let c2 = theta.iter().map(|t| -t).fold(f64::INFINITY, f64::min);
    push("-C1 r(1-r) <= u_* <= -C2 r(1-r)", c2 > 0.0 && c1.is_finite(), c2);
    // Endpoint limits r p' -> 0 and r^2 p'' -> 0 through the smallest nodes.
    let ddp = lagrange_slopes_of(r, &profile.p_prime);
    let rp: Vec<f64> = (1..6).map(|i| (r[i] * profile.p_prime[i]).abs()).collect();
    let r2pp: Vec<f64> = (1..6).map(|i| (r[i] * r[i] * ddp[i]).abs()).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
    push("r p_*' -> 0", decreasing(&rp), rp[0]);
    push("r^2 p_*'' -> 0", decreasing(&r2pp), r2pp[0]);

    let exponent = fit_exponent(r, &profile.p_prime);
    let report = ResidualReport {
        nutrient: profile.nutrient.residual,
        transport,
        velocity,
        u_center: uv[0],
        u_boundary: vel.u_boundary,
        p_boundary_extrapolated: p_ext,
        u_consistency,
        checks,
        u_bound_c1: c1,
        u_bound_c2: c2,
    };
    Ok(StationarySolution {
        spec: spec.clone(),
        z_star: profile.z,
        r_star: profile.z.exp(),
        c_star: profile.nutrient.c.clone(),
        c_prime: profile.nutrient.c_prime.clone(),
        nutrient: profile.nutrient,
        c_z,
        p_star,
        p_prime,
        u_star: vel.u,
        theta_star: vel.w_over_weight,
        p0,
        beta,
        exponent,
        residual_report: report,
        warnings,
    })
}

fn lagrange_slopes_of(r: &[f64], y: &[f64]) -> Vec<f64> {
    crate::field::lagrange_slopes(r, y)
}

fn lagrange_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..xs.len() {
        let mut l = 1.0;
        for j in 0..xs.len() {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        s += l * ys[i];
    }
    s
}

/// Log-log slope of `p'` against `r` over the first decade of positive nodes.
fn fit_exponent(r: &[f64], pp: &[f64]) -> ExponentFit {
    let h = r[1];
    let pts: Vec<(f64, f64)> = (1..r.len())
        .take_while(|&i| r[i] <= 10.0 * h * (1.0 + 1e-9))
        .filter(|&i| pp[i] > 0.0)
        .map(|i| (r[i].ln(), pp[i].ln()))
        .collect();
    if pts.len() < 3 {
        return ExponentFit { alpha_hat: f64::NAN, residual: f64::INFINITY, class: ExponentClass::Inconclusive, points: pts.len() };
    }
    let (slope, intercept) = least_squares(&pts);
    let residual = (pts.iter().map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    let class = if residual > 0.1 {
        ExponentClass::Inconclusive
    } else if slope >= 0.0 {
        ExponentClass::C1AtOrigin
    } else {
        ExponentClass::SingularDerivative
    };
    ExponentFit { alpha_hat: slope, residual, class, points: pts.len() }
}

/// Ordinary least-squares line `(slope, intercept)`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn solution() -> &'static StationarySolution {
        static SOL: OnceLock<StationarySolution> = OnceLock::new();
        SOL.get_or_init(|| {
            solve_stationary(&KineticsSpec::default(), (-2.0, 2.0), &RadialGrid::uniform(801).unwrap()).unwrap()
        })
    }

    #[test]
    fn boundary_root_quadratic() {
        let spec = KineticsSpec::affine(1.0, 1.0, 0.5, 0.4, 0.3);
        let p = boundary_root(&spec, 0.6).unwrap();
        let (km, kn, kp): (f64, f64, f64) = (0.8, 0.36, 0.24);
        let b = km - kn;
        let oracle = (b + (b * b + 4.0 * km * kp).sqrt()) / (2.0 * km);
        assert!((p - oracle).abs() < 1e-14);
        assert!((boundary_root(&spec, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let p = boundary_root(&spec, 0.0).unwrap();
        assert!((p - (0.5 - 0.3) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_default() {
        let s = solution();
        // Invariance in e^z sqrt(lambda) puts the root near 2.81594 - ln(lambda)/2.
        assert!((s.z_star - (2.81594 - 0.5 * 100f64.ln())).abs() < 1e-3, "{}", s.z_star);
        assert!(s.residual_report.u_boundary.abs() <= 1e-10);
        assert!(s.residual_report.all_checks_passed(), "{:?}", s.residual_report.checks);
        assert!(s.residual_report.transport <= 1e-6, "{}", s.residual_report.transport);
        assert!((s.residual_report.p_boundary_extrapolated - 1.0).abs() < 1e-3);
        assert!(s.residual_report.u_consistency < 1e-9, "{}", s.residual_report.u_consistency);
        assert!(s.exponent.alpha_hat > -1.0);
        assert!((s.exponent.alpha_hat - (s.beta - 1.0)).abs() < 0.05, "{} {}", s.exponent.alpha_hat, s.beta);
    }

    #[test]
    fn sign_change_around_root() {
        let s = solution();
        let g = s.grid();
        let lo = shooting_function(&s.spec, s.z_star - 0.1, g, ShootingOptions::default()).unwrap();
        let hi = shooting_function(&s.spec, s.z_star + 0.1, g, ShootingOptions::default()).unwrap();
        assert!(sign_of(lo) > 0.0 && sign_of(hi) < 0.0);
    }

    #[test]
    fn start_offset_refinement() {
        let s = solution();
        let a = integrate_profile(&s.spec, s.z_star, s.grid(), ShootingOptions::default()).unwrap();
        let opts = ShootingOptions { start_offset: 0.5e-6, ..Default::default() };
        let b = integrate_profile(&s.spec, s.z_star, s.grid(), opts).unwrap();
        let gap = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-7, "{gap}");
        assert!(a.diagnostics.monotone && a.diagnostics.max_interior_u < 0.0);
    }

    #[test]
    fn bracket_without_root() {
        let err = solve_stationary(&KineticsSpec::default(), (1.5, 2.0), &RadialGrid::uniform(201).unwrap());
        assert!(matches!(err, Err(StationaryError::Bracket { .. })));
    }
}
