//! Nonlinear evolution `p_t + w p_r = f(c, p)`, `z' = u(1)` by the method of
//! characteristics, with the `X` and `X_0` norms and pure-transport tools.
//!
//! Particles carry `(r_i, p_i)` and move with `w`. Every Runge–Kutta stage
//! re-solves the nutrient at the stage value of `z` (warm started) and
//! recomputes the velocity quadrature over the particles. With a stationary
//! background the particles instead carry the deviation `phi = p - p_*(r)`,
//! whose equation
//!
//! `phi' = f(c, p) - f(c_*, p_*) - dw p_*'`, `r' = u_*(r) - r u_*(1) + dw`
//!
//! has the discrete stationary state as an exact equilibrium.

pub mod picard;

use serde::Serialize;
use thiserror::Error;

use crate::field::{lagrange_slopes, GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::KineticsSpec;
use crate::nutrient::{NutrientCache, NutrientError};
use crate::stationary::StationarySolution;
use crate::velocity::integrate_velocity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error(transparent)]
    Nutrient(#[from] NutrientError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("characteristics crossed at t = {t} near particle {index}")]
    Crossing { t: f64, index: usize },
    #[error("p = {p} left [0, 1] at r = {r}, t = {t}")]
    Escaped { t: f64, r: f64, p: f64 },
    #[error("time step {dt} outside (0, {dt_max}]")]
    TimeStep { dt: f64, dt_max: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Escape tolerance for `p` outside `[0, 1]`.
pub const ESCAPE_TOL: f64 = 1e-9;

/// The unknown `U = (p, z)` at time `t`.
#[derive(Debug, Clone)]
pub struct TumorState {
    pub t: f64,
    pub p: RadialField,
    pub z: f64,
}

impl TumorState {
    pub fn new(t: f64, p: RadialField, z: f64) -> Self {
        Self { t, p, z }
    }

    pub fn stationary(sol: &StationarySolution) -> Self {
        Self { t: 0.0, p: sol.p_star.clone(), z: sol.z_star }
    }

    /// Quiescent fraction `q = 1 - p`.
    pub fn q(&self) -> RadialField {
        self.p.map(self.p.interpolation(), |_, v| 1.0 - v)
    }
}

/// `(X, X_0)` norms of a nodal deviation `(dev, dz)` on nodes `r`.
pub fn deviation_norms(r: &[f64], dev: &[f64], dz: f64) -> (f64, f64) {
    let sup = dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = lagrange_slopes(r, dev);
    let weighted = r.iter().zip(&d).fold(0.0f64, |m, (&x, &dv)| m.max((x * (1.0 - x) * dv).abs()));
    let nx = sup + dz.abs();
    (nx, nx + weighted)
}

pub fn norm_x(state: &TumorState, reference: &StationarySolution) -> Result<f64, TransportError> {
    Ok(norms(state, reference)?.0)
}

pub fn norm_x0(state: &TumorState, reference: &StationarySolution) -> Result<f64, TransportError> {
    Ok(norms(state, reference)?.1)
}

fn norms(state: &TumorState, reference: &StationarySolution) -> Result<(f64, f64), TransportError> {
    state.p.same_grid(&reference.p_star)?;
    let dev: Vec<f64> = state.p.values().iter().zip(reference.p_star.values()).map(|(a, b)| a - b).collect();
    Ok(deviation_norms(state.p.grid().nodes(), &dev, state.z - reference.z_star))
}

/// Particle positions and carried values with the grid used for regridding.
#[derive(Debug, Clone)]
pub struct CharacteristicBundle {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    pub reference: RadialGrid,
}

impl CharacteristicBundle {
    pub fn from_field(p: &RadialField) -> Self {
        Self { positions: p.grid().nodes().to_vec(), values: p.values().to_vec(), reference: p.grid().clone() }
    }

    pub fn min_spacing(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.positions.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Tightest and widest spacing relative to the reference spacing.
    pub fn spacing_ratios(&self) -> (f64, f64) {
        let h = 1.0 / (self.reference.len() - 1) as f64;
        (self.min_spacing() / h, self.max_spacing() / h)
    }

    /// Values interpolated onto the reference grid, leaving the bundle as is.
    pub fn sample(&self, interp: Interpolation) -> Result<Vec<f64>, TransportError> {
        let nodes = RadialGrid::from_nodes(self.positions.clone()).map_err(|_| self.crossing_error())?;
        let field = RadialField::new(nodes, self.values.clone(), interp)?;
        let mut out = vec![0.0; self.reference.len()];
        field.eval_sorted(self.reference.nodes(), &mut out);
        Ok(out)
    }

    fn crossing_error(&self) -> TransportError {
        let index = self.positions.windows(2).position(|w| w[1] <= w[0]).unwrap_or(0);
        TransportError::Crossing { t: f64::NAN, index }
    }
}

/// Move the particles back to the reference grid by monotone cubic
/// interpolation of the carried values.
pub fn regrid(bundle: &CharacteristicBundle) -> Result<CharacteristicBundle, TransportError> {
    let values = bundle.sample(Interpolation::MonotoneCubic)?;
    Ok(CharacteristicBundle { positions: bundle.reference.nodes().to_vec(), values, reference: bundle.reference.clone() })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransportOptions {
    pub dt: f64,
    pub dt_max: f64,
    /// Time between recorded samples; rounded to a whole number of steps.
    pub output_interval: f64,
    /// Regrid when the tightest spacing drops below this multiple of the
    /// reference spacing.
    pub regrid_min: f64,
    /// Regrid when the widest spacing exceeds this multiple.
    pub regrid_max: f64,
    /// Carry deviations from the stationary background.
    pub deviation: bool,
    pub record_deviations: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            dt_max: 1e-2,
            output_interval: 0.1,
            regrid_min: 0.2,
            regrid_max: 2.0,
            deviation: true,
            record_deviations: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub norm_x: Vec<f64>,
    pub norm_x0: Vec<f64>,
    pub p_center: Vec<f64>,
    pub p_boundary: Vec<f64>,
    /// Residual of the quiescent-cell balance reconstructed from `q = 1 - p`.
    pub mass_residual: Vec<f64>,
    /// Nodal `p - p_*` on the reference grid at each sample.
    #[serde(skip)]
    pub deviations: Vec<Vec<f64>>,
    pub regrids: usize,
    pub min_order_gap: f64,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: vec![],
            z: vec![],
            norm_x: vec![],
            norm_x0: vec![],
            p_center: vec![],
            p_boundary: vec![],
            mass_residual: vec![],
            deviations: vec![],
            regrids: 0,
            min_order_gap: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reconstructed state at sample `k`.
    pub fn state(&self, k: usize, reference: &StationarySolution) -> Option<TumorState> {
        let dev = self.deviations.get(k)?;
        let p: Vec<f64> = dev.iter().zip(reference.p_star.values()).map(|(d, p)| d + p).collect();
        let p = RadialField::new(reference.grid().clone(), p, Interpolation::MonotoneCubic).ok()?;
        Some(TumorState::new(self.times[k], p, self.z[k]))
    }
}

/// Characteristic solver state.
pub struct TransportSolver<'a> {
    spec: KineticsSpec,
    reference: &'a StationarySolution,
    cache: NutrientCache,
    opts: TransportOptions,
    pub bundle: CharacteristicBundle,
    pub z: f64,
    pub t: f64,
    pub regrids: usize,
    frozen: Option<picard::FrozenVelocity>,
}

/// Stationary fields sampled at particle positions.
struct Background {
    c: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    theta: Vec<f64>,
}

impl<'a> TransportSolver<'a> {
    pub fn new(
        spec: &KineticsSpec,
        reference: &'a StationarySolution,
        initial: &TumorState,
        opts: TransportOptions,
    ) -> Result<Self, TransportError> {
        if !(opts.dt > 0.0 && opts.dt <= opts.dt_max) {
            return Err(TransportError::TimeStep { dt: opts.dt, dt_max: opts.dt_max });
        }
        initial.p.same_grid(&reference.p_star)?;
        let mut bundle = CharacteristicBundle::from_field(&initial.p);
        if opts.deviation {
            for (v, s) in bundle.values.iter_mut().zip(reference.p_star.values()) {
                *v -= s;
            }
        }
        Ok(Self {
            spec: spec.clone(),
            reference,
            cache: NutrientCache::new(spec, reference.grid()),
            opts,
            bundle,
            z: initial.z,
            t: initial.t,
            regrids: 0,
            frozen: None,
        })
    }

    /// Move particles with a prescribed velocity path instead of the
    /// solution's own velocity (deviation mode only).
    pub fn with_frozen_velocity(mut self, path: picard::FrozenVelocity) -> Self {
        self.frozen = Some(path);
        self
    }

    fn background(&self, x: &[f64]) -> Background {
        let n = x.len();
        let r = self.reference;
        let mut bg = Background { c: vec![0.0; n], p: vec![0.0; n], dp: vec![0.0; n], theta: vec![0.0; n] };
        r.c_star.eval_sorted(x, &mut bg.c);
        r.p_star.eval_sorted(x, &mut bg.p);
        r.theta_star.eval_sorted(x, &mut bg.theta);
        for (o, &xi) in bg.dp.iter_mut().zip(x) {
            *o = r.p_star.eval_deriv(xi);
        }
        bg
    }

    /// Right-hand side at `(x, v, z)`; returns `dz/dt`.
    fn rhs(&mut self, t: f64, x: &[f64], v: &[f64], z: f64, dx: &mut [f64], dv: &mut [f64]) -> Result<f64, TransportError> {
        let n = x.len();
        let mut c = vec![0.0; n];
        self.cache.solve(z)?.c.eval_sorted(x, &mut c);
        for ci in c.iter_mut() {
            *ci = ci.clamp(0.0, 1.0);
        }
        let spec = &self.spec;
        let mut u = vec![0.0; n];
        if !self.opts.deviation {
            let g: Vec<f64> = c.iter().zip(v).map(|(&ci, &pi)| spec.growth(ci, pi)).collect();
            let u1 = integrate_velocity(x, &g, &mut u);
            for i in 0..n {
                dx[i] = u[i] - x[i] * u1;
                dv[i] = spec.reaction(c[i], v[i]);
            }
            dx[0] = 0.0;
            dx[n - 1] = 0.0;
            return Ok(u1);
        }
        let bg = self.background(x);
        let mut dg = vec![0.0; n];
        for i in 0..n {
            let p = bg.p[i] + v[i];
            dg[i] = spec.growth(c[i], p) - spec.growth(bg.c[i], bg.p[i]);
        }
        let du1 = integrate_velocity(x, &dg, &mut u);
        for i in 0..n {
            let dw = u[i] - x[i] * du1;
            let p = bg.p[i] + v[i];
            dx[i] = bg.theta[i] * x[i] * (1.0 - x[i]) + dw;
            dv[i] = spec.reaction(c[i], p) - spec.reaction(bg.c[i], bg.p[i]) - dw * bg.dp[i];
        }
        if let Some(path) = &self.frozen {
            path.velocity(t, x, dx);
        }
        dx[0] = 0.0;
        dx[n - 1] = 0.0;
        Ok(self.reference.residual_report.u_boundary + du1)
    }

    /// One classical Runge–Kutta step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<(), TransportError> {
        let n = self.bundle.positions.len();
        let x0 = self.bundle.positions.clone();
        let v0 = self.bundle.values.clone();
        let z0 = self.z;
        let mut kx = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut kv = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut kz = [0.0; 4];
        let mut xs = x0.clone();
        let mut vs = v0.clone();
        const A: [f64; 3] = [0.5, 0.5, 1.0];
        for s in 0..4 {
            if s > 0 {
                let a = A[s - 1] * dt;
                for i in 0..n {
                    xs[i] = x0[i] + a * kx[s - 1][i];
                    vs[i] = v0[i] + a * kv[s - 1][i];
                }
                xs[0] = 0.0;
                xs[n - 1] = 1.0;
            }
            let (zs, ts) = if s == 0 { (z0, self.t) } else { (z0 + A[s - 1] * dt * kz[s - 1], self.t + A[s - 1] * dt) };
            let (kxs, kvs) = (&mut kx[s], &mut kv[s]);
            kz[s] = self.rhs(ts, &xs, &vs, zs, kxs, kvs)?;
        }
        let w = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
        for i in 0..n {
            xs[i] = x0[i] + dt * (w[0] * kx[0][i] + w[1] * kx[1][i] + w[2] * kx[2][i] + w[3] * kx[3][i]);
            vs[i] = v0[i] + dt * (w[0] * kv[0][i] + w[1] * kv[1][i] + w[2] * kv[2][i] + w[3] * kv[3][i]);
        }
        xs[0] = 0.0;
        xs[n - 1] = 1.0;
        self.z = z0 + dt * (w[0] * kz[0] + w[1] * kz[1] + w[2] * kz[2] + w[3] * kz[3]);
        self.t += dt;
        if !self.z.is_finite() || vs.iter().any(|v| !v.is_finite()) || xs.iter().any(|v| !v.is_finite()) {
            return Err(TransportError::NonFinite { t: self.t });
        }
        if let Some(index) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TransportError::Crossing { t: self.t, index });
        }
        self.bundle.positions = xs;
        self.bundle.values = vs;
        self.check_range()?;
        Ok(())
    }

    fn check_range(&self) -> Result<(), TransportError> {
        let x = &self.bundle.positions;
        let p = self.absolute_values();
        for (i, &pi) in p.iter().enumerate() {
            if !(-ESCAPE_TOL..=1.0 + ESCAPE_TOL).contains(&pi) {
                return Err(TransportError::Escaped { t: self.t, r: x[i], p: pi });
            }
        }
        Ok(())
    }

    /// Particle values of `p`.
    pub fn absolute_values(&self) -> Vec<f64> {
        if !self.opts.deviation {
            return self.bundle.values.clone();
        }
        let mut ps = vec![0.0; self.bundle.positions.len()];
        self.reference.p_star.eval_sorted(&self.bundle.positions, &mut ps);
        ps.iter().zip(&self.bundle.values).map(|(a, b)| a + b).collect()
    }

    /// Particle deviations `p - p_*(r)`.
    pub fn deviations(&self) -> Vec<f64> {
        if self.opts.deviation {
            return self.bundle.values.clone();
        }
        let mut ps = vec![0.0; self.bundle.positions.len()];
        self.reference.p_star.eval_sorted(&self.bundle.positions, &mut ps);
        self.bundle.values.iter().zip(&ps).map(|(a, b)| a - b).collect()
    }

    pub fn maybe_regrid(&mut self) -> Result<bool, TransportError> {
        let (lo, hi) = self.bundle.spacing_ratios();
        if lo >= self.opts.regrid_min && hi <= self.opts.regrid_max {
            return Ok(false);
        }
        let abs = CharacteristicBundle {
            positions: self.bundle.positions.clone(),
            values: self.absolute_values(),
            reference: self.bundle.reference.clone(),
        };
        let mut fresh = regrid(&abs)?;
        if self.opts.deviation {
            for (v, s) in fresh.values.iter_mut().zip(self.reference.p_star.values()) {
                *v -= s;
            }
        }
        self.bundle = fresh;
        self.regrids += 1;
        Ok(true)
    }

    /// Deviation on the reference grid.
    pub fn grid_deviation(&self) -> Result<Vec<f64>, TransportError> {
        let b = CharacteristicBundle {
            positions: self.bundle.positions.clone(),
            values: self.deviations(),
            reference: self.bundle.reference.clone(),
        };
        b.sample(Interpolation::Cubic).map_err(|e| match e {
            TransportError::Crossing { index, .. } => TransportError::Crossing { t: self.t, index },
            other => other,
        })
    }

    /// Current state on the reference grid.
    pub fn state(&self) -> Result<TumorState, TransportError> {
        let dev = self.grid_deviation()?;
        let p: Vec<f64> = dev.iter().zip(self.reference.p_star.values()).map(|(d, s)| d + s).collect();
        Ok(TumorState::new(self.t, RadialField::new(self.reference.grid().clone(), p, Interpolation::MonotoneCubic)?, self.z))
    }

    /// Max interior residual of the quiescent-cell balance
    /// `q_t + w q_r = K_Q p - (K_D + K_P) q - q div u` on the reference grid,
    /// with `q = 1 - p`, `q_t + w q_r = -f` and `div u` by nodal differences
    /// of the discrete velocity.
    fn mass_residual(&mut self, p: &[f64]) -> Result<f64, TransportError> {
        let grid = self.reference.grid().clone();
        let r = grid.nodes();
        let c = self.cache.solve(self.z)?.c.values().to_vec();
        let g: Vec<f64> = c.iter().zip(p).map(|(&ci, &pi)| self.spec.growth(ci, pi)).collect();
        let mut u = vec![0.0; r.len()];
        integrate_velocity(r, &g, &mut u);
        let du = lagrange_slopes(r, &u);
        let mut worst = 0.0f64;
        for i in 1..r.len() - 1 {
            let rv = self.spec.rates(c[i]);
            let q = 1.0 - p[i];
            let div = du[i] + 2.0 * u[i] / r[i];
            let lhs = -self.spec.reaction(c[i], p[i]);
            let rhs = rv.kq * p[i] - (rv.kd + rv.kp) * q - q * div;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }

    fn record(&mut self, traj: &mut Trajectory) -> Result<(), TransportError> {
        let dev = self.grid_deviation()?;
        let r = self.reference.grid().nodes();
        let (nx, nx0) = deviation_norms(r, &dev, self.z - self.reference.z_star);
        let p: Vec<f64> = dev.iter().zip(self.reference.p_star.values()).map(|(d, s)| d + s).collect();
        traj.times.push(self.t);
        traj.z.push(self.z);
        traj.norm_x.push(nx);
        traj.norm_x0.push(nx0);
        traj.p_center.push(p[0]);
        traj.p_boundary.push(p[p.len() - 1]);
        let mr = self.mass_residual(&p)?;
        traj.mass_residual.push(mr);
        if self.opts.record_deviations {
            traj.deviations.push(dev);
        }
        Ok(())
    }

    /// Advance to `t_end`, sampling every `output_interval`.
    pub fn run(&mut self, t_end: f64) -> Result<Trajectory, TransportError> {
        match self.run_partial(t_end) {
            (traj, None) => Ok(traj),
            (_, Some(e)) => Err(e),
        }
    }

    /// As [`run`](Self::run), but on failure also hands back the samples
    /// recorded so far.
    pub fn run_partial(&mut self, t_end: f64) -> (Trajectory, Option<TransportError>) {
        let mut traj = Trajectory::new();
        let err = self.advance(t_end, &mut traj).err();
        (traj, err)
    }

    fn advance(&mut self, t_end: f64, traj: &mut Trajectory) -> Result<(), TransportError> {
        let dt = self.opts.dt;
        let steps = ((t_end - self.t) / dt).round().max(0.0) as usize;
        let every = ((self.opts.output_interval / dt).round() as usize).max(1);
        let t0 = self.t;
        self.record(traj)?;
        for k in 1..=steps {
            self.step(dt)?;
            self.t = t0 + k as f64 * dt;
            let gap = self.bundle.min_spacing();
            traj.min_order_gap = traj.min_order_gap.min(gap);
            if self.maybe_regrid()? {
                traj.regrids += 1;
            }
            if k % every == 0 {
                self.record(traj)?;
            }
        }
        Ok(())
    }
}

/// Run the nonlinear evolution from `initial` to `t_end`, with norms taken
/// against `reference`.
pub fn simulate(
    initial: &TumorState,
    t_end: f64,
    spec: &KineticsSpec,
    reference: &StationarySolution,
    opts: TransportOptions,
) -> Result<Trajectory, TransportError> {
    TransportSolver::new(spec, reference, initial, opts)?.run(t_end)
}

/// `||F(U_*)||_X` estimated by one plain step of size `dt` from the
/// stationary state: `[p(dt) - p_*(r(dt))]/dt` along characteristics plus
/// `|z(dt) - z_*|/dt`.
pub fn fixed_point_residual(spec: &KineticsSpec, sol: &StationarySolution, dt: f64) -> Result<f64, TransportError> {
    let opts = TransportOptions { dt, dt_max: dt.max(1e-2), deviation: false, ..Default::default() };
    let mut s = TransportSolver::new(spec, sol, &TumorState::stationary(sol), opts)?;
    s.step(dt)?;
    let dev = s.deviations();
    let sup = dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((sup + (s.z - sol.z_star).abs()) / dt)
}

/// Sup-norm and weighted-derivative history of pure transport
/// `q_t + w q_r = 0` with a fixed velocity.
#[derive(Debug, Clone, Serialize)]
pub struct PureTransportReport {
    pub times: Vec<f64>,
    pub sup: Vec<f64>,
    pub weighted_derivative: Vec<f64>,
    /// Largest one-step increase of the sup norm.
    pub max_increase: f64,
    /// `max a_V` with `a_V = (1 - 2r) w/(r(1-r)) - w'`.
    pub c0: f64,
}

/// Pure transport of `q0` by a fixed field `w = -r(1-r) h(r)` with `h > 0`,
/// sampled on the grid of `q0` after every step.
pub fn pure_transport(
    q0: &RadialField,
    h: impl Fn(f64) -> f64,
    h_prime: impl Fn(f64) -> f64,
    t_end: f64,
    dt: f64,
) -> Result<PureTransportReport, TransportError> {
    let w = |r: f64| -r * (1.0 - r) * h(r);
    let mut bundle = CharacteristicBundle::from_field(q0);
    let n = bundle.positions.len();
    let steps = (t_end / dt).round() as usize;
    let mut rep = PureTransportReport {
        times: vec![0.0],
        sup: vec![q0.sup_norm()],
        weighted_derivative: vec![deviation_norms(q0.grid().nodes(), q0.values(), 0.0).1 - q0.sup_norm()],
        max_increase: f64::NEG_INFINITY,
        c0: f64::NEG_INFINITY,
    };
    for &r in q0.grid().nodes() {
        let wp = -(1.0 - 2.0 * r) * h(r) - r * (1.0 - r) * h_prime(r);
        let a = -(1.0 - 2.0 * r) * h(r) - wp;
        rep.c0 = rep.c0.max(a);
    }
    for k in 1..=steps {
        for i in 1..n - 1 {
            let x = bundle.positions[i];
            let k1 = w(x);
            let k2 = w(x + 0.5 * dt * k1);
            let k3 = w(x + 0.5 * dt * k2);
            let k4 = w(x + dt * k3);
            bundle.positions[i] = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
        if let Some(index) = bundle.positions.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TransportError::Crossing { t: k as f64 * dt, index });
        }
        let (lo, hi) = bundle.spacing_ratios();
        if lo < 0.2 || hi > 2.0 {
            bundle = regrid(&bundle)?;
        }
        // The monotone interpolant attains its extrema at the particles.
        let sup = bundle.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sampled = bundle.sample(Interpolation::MonotoneCubic)?;
        let (nx, nx0) = deviation_norms(q0.grid().nodes(), &sampled, 0.0);
        rep.max_increase = rep.max_increase.max(sup - rep.sup.last().copied().unwrap_or(sup));
        rep.times.push(k as f64 * dt);
        rep.sup.push(sup);
        rep.weighted_derivative.push(nx0 - nx);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{solve, Tolerance};
    use crate::stationary::solve_stationary;
    use std::sync::OnceLock;

    pub(crate) fn reference() -> &'static StationarySolution {
        static SOL: OnceLock<StationarySolution> = OnceLock::new();
        SOL.get_or_init(|| {
            solve_stationary(&KineticsSpec::default(), (-2.0, 2.0), &RadialGrid::uniform(201).unwrap()).unwrap()
        })
    }

    #[test]
    fn norms_of_simple_deviations() {
        let s = reference();
        let st = TumorState::stationary(s);
        assert_eq!(norm_x(&st, s).unwrap(), 0.0);
        let shifted = TumorState::new(0.0, s.p_star.map(Interpolation::Cubic, |_, v| v + 0.01), s.z_star);
        assert!((norm_x(&shifted, s).unwrap() - 0.01).abs() < 1e-15);
        assert!((norm_x0(&shifted, s).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn sine_deviation_weighted_norm() {
        let g = RadialGrid::uniform(801).unwrap();
        let delta = 1e-3;
        let pi = std::f64::consts::PI;
        let dev: Vec<f64> = g.nodes().iter().map(|&r| delta * (pi * r).sin()).collect();
        let (nx, nx0) = deviation_norms(g.nodes(), &dev, 0.0);
        let fine = (0..=100_000)
            .map(|k| {
                let r = k as f64 / 100_000.0;
                r * (1.0 - r) * pi * (pi * r).cos().abs()
            })
            .fold(0.0, f64::max);
        assert!((nx0 - nx - delta * fine).abs() < 1e-9);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let s = reference();
        let spec = KineticsSpec::default();
        let traj = simulate(&TumorState::stationary(s), 1.0, &spec, s, TransportOptions::default()).unwrap();
        assert!(traj.norm_x.iter().all(|&n| n <= 1e-6), "{:?}", traj.norm_x.last());
        assert!(traj.mass_residual.iter().all(|&m| m <= 1e-6), "{:?}", traj.mass_residual);
    }

    #[test]
    fn fixed_point_residual_is_small() {
        let s = reference();
        let r = fixed_point_residual(&KineticsSpec::default(), s, 1e-2).unwrap();
        assert!(r <= 1e-6, "{r}");
    }

    #[test]
    fn constant_profile_follows_scalar_ode() {
        // At z = -30 the nutrient is saturated, w vanishes, and a flat p obeys
        // p' = f(1, p), z' = g(1, p)/3.
        let spec = KineticsSpec::default();
        let s = reference();
        let p0 = 0.3;
        let init = TumorState::new(0.0, RadialField::from_fn(s.grid(), Interpolation::Cubic, |_| p0), -30.0);
        let opts = TransportOptions { deviation: false, output_interval: 1.0, ..Default::default() };
        let mut solver = TransportSolver::new(&spec, s, &init, opts).unwrap();
        solver.run(2.0).unwrap();
        let mut y = [p0, -30.0];
        solve(
            |_, y, d| {
                d[0] = spec.reaction(1.0, y[0]);
                d[1] = spec.growth(1.0, y[0]) / 3.0;
            },
            0.0,
            2.0,
            &mut y,
            Tolerance { rtol: 1e-13, atol: 1e-15, ..Default::default() },
        )
        .unwrap();
        let vals = solver.absolute_values();
        let spread = vals.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max);
        assert!(spread <= 1e-8, "{spread}");
        assert!((solver.z - y[1]).abs() <= 1e-8);
    }

    #[test]
    fn regrid_of_uniform_bundle_is_identity() {
        let g = RadialGrid::uniform(101).unwrap();
        let f = RadialField::from_fn(&g, Interpolation::MonotoneCubic, |r| r * r * (3.0 - 2.0 * r));
        let b = CharacteristicBundle::from_field(&f);
        let out = regrid(&b).unwrap();
        for (a, b) in out.values.iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn pure_transport_contracts() {
        let g = RadialGrid::uniform(201).unwrap();
        let q0 = RadialField::from_fn(&g, Interpolation::MonotoneCubic, |r| (3.0 * r).sin() + 0.2);
        let rep = pure_transport(&q0, |r| 0.5 + r, |_| 1.0, 3.0, 1e-2).unwrap();
        assert!(rep.max_increase <= 1e-10, "{}", rep.max_increase);
    }
}
