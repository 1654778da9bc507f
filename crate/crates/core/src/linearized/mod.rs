//! Linearization about the stationary state and its evolution
//!
//! `phi_t + w_* phi_r = a phi + B phi + b zeta`, `zeta' = F phi + kappa zeta`,
//!
//! together with decay fits and the resolvent of `-w q' + a q`.
//!
//! The solver carries `phi` on particles moving with the frozen field `w_*`.
//! Positions come from the travel-time table, so the particle paths are exact
//! up to table accuracy and repeat identically after every regrid; they are
//! precomputed once per time step and shared by all runs on the same
//! operators.

mod decay;
mod resolvent;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub use decay::{fit_decay, fit_decay_from, DecayReport, NormKind};
pub use resolvent::{
    laplace_consistency, multiplier_semigroup, resolvent_apply, resolvent_residual, LaplaceOptions, LaplaceReport,
    Resolvent,
};

use crate::field::{cumulative_integral, GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::KineticsSpec;
use crate::ode::OdeError;
use crate::simmaps::{FStarTable, MapError, DEFAULT_DX};
use crate::stationary::StationarySolution;
use crate::transport::deviation_norms;
use crate::velocity::integrate_velocity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizedError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("Re lambda = {re_lambda} is not above omega_0 = {omega0}")]
    Spectrum { re_lambda: f64, omega0: f64 },
    #[error("tail bound {tail} at horizon {horizon} exceeds {tol}")]
    HorizonTooShort { horizon: f64, tail: f64, tol: f64 },
    #[error("norm fell from {first} to {last}, less than two decades")]
    InsufficientDecay { first: f64, last: f64 },
    #[error("{samples} samples are too few for a fit")]
    TooFewSamples { samples: usize },
    #[error("time step {dt} must be positive and finite")]
    TimeStep { dt: f64 },
    #[error("particles crossed at t = {t}")]
    Crossing { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Test switches applied while assembling the operators.
#[derive(Debug, Clone, Copy, Default)]
pub struct OperatorHooks {
    /// Treat the nutrient sensitivity `c_z` as zero.
    pub zero_cz: bool,
    /// Replace `g_p = K_M(c_*)` by a constant.
    pub g_p: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearizedOperators {
    pub a: RadialField,
    pub b: RadialField,
    pub g_p: RadialField,
    /// `g_c c_z` with `g_c = -K_D'(c_*) + K_M'(c_*) p_*`.
    pub g_c_cz: RadialField,
    /// `f_c c_z`, the nutrient part of `b`.
    pub f_c_cz: RadialField,
    pub kappa: f64,
    /// `r p_*'(r)`.
    pub rp_prime: RadialField,
    pub p_prime: RadialField,
    /// Running integral `int_0^r g_c c_z rho^2`.
    pub inner_gc: Vec<f64>,
    /// Frozen transport velocity `w_* = r(1-r) theta_*`.
    pub w_star: RadialField,
    pub table: FStarTable,
    /// `max a` over the nodes.
    pub omega0: f64,
}

pub fn build_operators(sol: &StationarySolution, spec: &KineticsSpec) -> Result<LinearizedOperators, LinearizedError> {
    build_operators_with(sol, spec, OperatorHooks::default())
}

pub fn build_operators_with(
    sol: &StationarySolution,
    spec: &KineticsSpec,
    hooks: OperatorHooks,
) -> Result<LinearizedOperators, LinearizedError> {
    let grid = sol.grid().clone();
    let r = grid.nodes();
    let m = r.len();
    let (c, p, dp) = (sol.c_star.values(), sol.p_star.values(), sol.p_prime.values());
    let cz: Vec<f64> = if hooks.zero_cz { vec![0.0; m] } else { sol.c_z.values().to_vec() };
    let mut a = vec![0.0; m];
    let mut f_c_cz = vec![0.0; m];
    let mut g_p = vec![0.0; m];
    let mut g_c_cz = vec![0.0; m];
    for i in 0..m {
        let rv = spec.rates(c[i]);
        let (fp, fc) = spec.reaction_partials(c[i], p[i]);
        a[i] = fp;
        f_c_cz[i] = fc * cz[i];
        g_p[i] = hooks.g_p.unwrap_or(rv.km);
        g_c_cz[i] = (-rv.kd_d + rv.km_d * p[i]) * cz[i];
    }
    let weighted: Vec<f64> = r.iter().zip(&g_c_cz).map(|(&x, &g)| g * x * x).collect();
    let inner_gc = cumulative_integral(r, &weighted);
    let kappa = inner_gc[m - 1];
    let rp: Vec<f64> = r.iter().zip(dp).map(|(&x, &d)| x * d).collect();
    let b: Vec<f64> = (0..m)
        .map(|i| if i == 0 { f_c_cz[0] } else { f_c_cz[i] + rp[i] * (kappa - inner_gc[i] / r[i].powi(3)) })
        .collect();
    let omega0 = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let field = |v: Vec<f64>| RadialField::new(grid.clone(), v, Interpolation::Cubic);
    let w_star = sol.theta_star.map(Interpolation::Cubic, |x, th| x * (1.0 - x) * th);
    Ok(LinearizedOperators {
        a: field(a)?,
        b: field(b)?,
        g_p: field(g_p)?,
        g_c_cz: field(g_c_cz)?,
        f_c_cz: field(f_c_cz)?,
        kappa,
        rp_prime: field(rp)?,
        p_prime: sol.p_prime.clone(),
        inner_gc,
        w_star,
        table: FStarTable::from_theta(&sol.theta_star, DEFAULT_DX)?,
        omega0,
    })
}

impl LinearizedOperators {
    pub fn grid(&self) -> &RadialGrid {
        self.a.grid()
    }
}

/// `B q = r p_*' [int_0^1 g_p q rho^2 - r^{-3} int_0^r g_p q rho^2]`, zero at
/// the center.
pub fn apply_b(ops: &LinearizedOperators, q: &RadialField) -> Result<RadialField, LinearizedError> {
    q.same_grid(&ops.a)?;
    let r = q.grid().nodes();
    let y: Vec<f64> = (0..r.len()).map(|i| ops.g_p.values()[i] * q.values()[i] * r[i] * r[i]).collect();
    let cum = cumulative_integral(r, &y);
    let total = cum[r.len() - 1];
    let rp = ops.rp_prime.values();
    let out = (0..r.len()).map(|i| if i == 0 { 0.0 } else { rp[i] * (total - cum[i] / r[i].powi(3)) }).collect();
    Ok(RadialField::new(q.grid().clone(), out, Interpolation::Cubic)?)
}

/// `F q = int_0^1 g_p q rho^2`.
pub fn apply_f(ops: &LinearizedOperators, q: &RadialField) -> Result<f64, LinearizedError> {
    q.same_grid(&ops.a)?;
    let r = q.grid().nodes();
    let y: Vec<f64> = (0..r.len()).map(|i| ops.g_p.values()[i] * q.values()[i] * r[i] * r[i]).collect();
    Ok(cumulative_integral(r, &y)[r.len() - 1])
}

/// The block operator applied to `(q, zeta)`:
/// `(a q + B q + b zeta, F q + kappa zeta)`.
pub fn apply_block(ops: &LinearizedOperators, q: &RadialField, zeta: f64) -> Result<(RadialField, f64), LinearizedError> {
    let bq = apply_b(ops, q)?;
    let vals = (0..q.len())
        .map(|i| ops.a.values()[i] * q.values()[i] + bq.values()[i] + ops.b.values()[i] * zeta)
        .collect();
    Ok((RadialField::new(q.grid().clone(), vals, Interpolation::Cubic)?, apply_f(ops, q)? + ops.kappa * zeta))
}

/// Operator coefficients sampled at particle positions.
#[derive(Debug, Clone)]
struct Samples {
    x: Vec<f64>,
    a: Vec<f64>,
    f_c_cz: Vec<f64>,
    dp: Vec<f64>,
    g_p: Vec<f64>,
    g_c_cz: Vec<f64>,
}

impl Samples {
    fn at(ops: &LinearizedOperators, x: Vec<f64>) -> Self {
        let n = x.len();
        let mut s = Samples { a: vec![0.0; n], f_c_cz: vec![0.0; n], dp: vec![0.0; n], g_p: vec![0.0; n], g_c_cz: vec![0.0; n], x };
        ops.a.eval_sorted(&s.x, &mut s.a);
        ops.f_c_cz.eval_sorted(&s.x, &mut s.f_c_cz);
        ops.p_prime.eval_sorted(&s.x, &mut s.dp);
        ops.g_p.eval_sorted(&s.x, &mut s.g_p);
        ops.g_c_cz.eval_sorted(&s.x, &mut s.g_c_cz);
        s
    }

    /// Implicit form of the block action along characteristics: the density
    /// perturbation `g_p v + g_c c_z zeta` drives a velocity perturbation
    /// `dw`, and `v' = a v + f_c c_z zeta - p_*' dw`. Returns `zeta'`.
    fn rhs(&self, v: &[f64], zeta: f64, dv: &mut [f64], u: &mut [f64]) -> f64 {
        let n = v.len();
        let dg: Vec<f64> = (0..n).map(|i| self.g_p[i] * v[i] + self.g_c_cz[i] * zeta).collect();
        let du1 = integrate_velocity(&self.x, &dg, u);
        for i in 0..n {
            let dw = u[i] - self.x[i] * du1;
            dv[i] = self.a[i] * v[i] + self.f_c_cz[i] * zeta - self.dp[i] * dw;
        }
        du1
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearOptions {
    pub dt: f64,
    pub output_interval: f64,
    pub regrid_min: f64,
    pub regrid_max: f64,
    /// Keep the nodal `phi` of every sample.
    pub record_phi: bool,
    /// Upper bound on the steps between regrids.
    pub max_period: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { dt: 1e-2, output_interval: 0.1, regrid_min: 0.2, regrid_max: 2.0, record_phi: false, max_period: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearTrajectory {
    pub times: Vec<f64>,
    pub zeta: Vec<f64>,
    pub norm_x: Vec<f64>,
    pub norm_x0: Vec<f64>,
    #[serde(skip)]
    pub phi: Vec<Vec<f64>>,
    pub regrids: usize,
}

impl LinearTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn norms(&self, kind: NormKind) -> &[f64] {
        match kind {
            NormKind::X => &self.norm_x,
            NormKind::X0 => &self.norm_x0,
        }
    }

    pub fn decay(&self, kind: NormKind) -> Result<DecayReport, LinearizedError> {
        fit_decay(&self.times, self.norms(kind), kind)
    }
}

/// Linearized solver with its particle schedule: positions and coefficient
/// samples at every half step from one regrid to the next.
pub struct LinearSolver<'a> {
    ops: &'a LinearizedOperators,
    opts: LinearOptions,
    schedule: Vec<Samples>,
    period: usize,
}

impl<'a> LinearSolver<'a> {
    pub fn new(ops: &'a LinearizedOperators, opts: LinearOptions) -> Result<Self, LinearizedError> {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(LinearizedError::TimeStep { dt: opts.dt });
        }
        let nodes = ops.grid().nodes();
        let n = nodes.len();
        let gaps = |x: &[f64]| {
            x.windows(2).map(|w| w[1] - w[0]).fold((f64::INFINITY, 0.0f64), |(lo, hi), g| (lo.min(g), hi.max(g)))
        };
        let (ref_lo, ref_hi) = gaps(nodes);
        let y: Vec<f64> = nodes.iter().map(|&r| ops.table.eval(r)).collect();
        let positions = |tau: f64| -> Vec<f64> {
            let mut x: Vec<f64> = y.iter().map(|&v| ops.table.inverse(v - tau)).collect();
            x[0] = 0.0;
            x[n - 1] = 1.0;
            x
        };
        let mut schedule = vec![Samples::at(ops, nodes.to_vec())];
        let mut period = opts.max_period;
        for k in 1..=opts.max_period {
            schedule.push(Samples::at(ops, positions((k as f64 - 0.5) * opts.dt)));
            let x = positions(k as f64 * opts.dt);
            if x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LinearizedError::Crossing { t: k as f64 * opts.dt });
            }
            let (lo, hi) = gaps(&x);
            schedule.push(Samples::at(ops, x));
            if lo < opts.regrid_min * ref_lo || hi > opts.regrid_max * ref_hi {
                period = k;
                break;
            }
        }
        Ok(Self { ops, opts, schedule, period })
    }

    /// Steps between regrids.
    pub fn period(&self) -> usize {
        self.period
    }

    fn to_grid(&self, k: usize, v: &[f64]) -> Result<Vec<f64>, LinearizedError> {
        if k == 0 {
            return Ok(v.to_vec());
        }
        let x = &self.schedule[2 * k].x;
        let field = RadialField::new(RadialGrid::from_nodes(x.clone())?, v.to_vec(), Interpolation::Cubic)?;
        let mut out = vec![0.0; v.len()];
        field.eval_sorted(self.ops.grid().nodes(), &mut out);
        Ok(out)
    }

    pub fn solve(&self, phi0: &RadialField, zeta0: f64, t_end: f64) -> Result<LinearTrajectory, LinearizedError> {
        phi0.same_grid(&self.ops.a)?;
        let dt = self.opts.dt;
        let steps = (t_end / dt).round().max(0.0) as usize;
        let every = ((self.opts.output_interval / dt).round() as usize).max(1);
        let nodes = self.ops.grid().nodes();
        let n = nodes.len();
        let mut traj =
            LinearTrajectory { times: vec![], zeta: vec![], norm_x: vec![], norm_x0: vec![], phi: vec![], regrids: 0 };
        let record = |t: f64, phi: Vec<f64>, zeta: f64, traj: &mut LinearTrajectory| {
            let (nx, nx0) = deviation_norms(nodes, &phi, zeta);
            traj.times.push(t);
            traj.zeta.push(zeta);
            traj.norm_x.push(nx);
            traj.norm_x0.push(nx0);
            if self.opts.record_phi {
                traj.phi.push(phi);
            }
        };
        let mut v = phi0.values().to_vec();
        let mut zeta = zeta0;
        record(0.0, v.clone(), zeta, &mut traj);
        let mut k = 0usize;
        let mut u = vec![0.0; n];
        let mut kv = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut vs = vec![0.0; n];
        for step in 1..=steps {
            let stage = [&self.schedule[2 * k], &self.schedule[2 * k + 1], &self.schedule[2 * k + 1], &self.schedule[2 * k + 2]];
            let mut kz = [0.0; 4];
            const A: [f64; 3] = [0.5, 0.5, 1.0];
            for s in 0..4 {
                let zs = if s == 0 {
                    vs.copy_from_slice(&v);
                    zeta
                } else {
                    let h = A[s - 1] * dt;
                    for i in 0..n {
                        vs[i] = v[i] + h * kv[s - 1][i];
                    }
                    zeta + h * kz[s - 1]
                };
                kz[s] = stage[s].rhs(&vs, zs, &mut kv[s], &mut u);
            }
            for i in 0..n {
                v[i] += dt * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]) / 6.0;
            }
            zeta += dt * (kz[0] + 2.0 * kz[1] + 2.0 * kz[2] + kz[3]) / 6.0;
            let t = step as f64 * dt;
            if !zeta.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(LinearizedError::NonFinite { t });
            }
            k += 1;
            if k == self.period {
                v = self.to_grid(k, &v)?;
                k = 0;
                traj.regrids += 1;
            }
            if step % every == 0 {
                record(t, self.to_grid(k, &v)?, zeta, &mut traj);
            }
        }
        Ok(traj)
    }
}

/// Solve the linearized evolution from `(phi0, zeta0)` up to `t_end`.
pub fn solve_linearized(
    ops: &LinearizedOperators,
    phi0: &RadialField,
    zeta0: f64,
    t_end: f64,
    opts: LinearOptions,
) -> Result<LinearTrajectory, LinearizedError> {
    LinearSolver::new(ops, opts)?.solve(phi0, zeta0, t_end)
}

/// Random smooth profile `sum_k c_k cos(k pi r)` with `c_k` uniform in
/// `[-1, 1] / (1 + k)^2`, scaled to unit sup norm.
pub fn random_smooth_field(grid: &RadialGrid, modes: usize, rng: &mut impl Rng) -> RadialField {
    let c: Vec<f64> = (0..modes.max(1)).map(|k| rng.gen_range(-1.0..1.0) / ((1 + k) as f64).powi(2)).collect();
    let raw = RadialField::from_fn(grid, Interpolation::Cubic, |r| {
        c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * std::f64::consts::PI * r).cos()).sum()
    });
    let s = raw.sup_norm().max(1e-300);
    raw.map(Interpolation::Cubic, |_, v| v / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::solve_stationary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    pub(crate) fn reference() -> &'static (StationarySolution, LinearizedOperators) {
        static REF: OnceLock<(StationarySolution, LinearizedOperators)> = OnceLock::new();
        REF.get_or_init(|| {
            let spec = KineticsSpec::default();
            let sol = solve_stationary(&spec, (-2.0, 2.0), &RadialGrid::uniform(201).unwrap()).unwrap();
            let ops = build_operators(&sol, &spec).unwrap();
            (sol, ops)
        })
    }

    #[test]
    fn endpoint_coefficient() {
        let (sol, ops) = reference();
        let spec = KineticsSpec::default();
        let rv = spec.rates(1.0);
        assert_eq!(rv.kd, 0.0);
        assert_eq!(rv.kq, 0.0);
        let p1 = *sol.p_star.values().last().unwrap();
        let expect = -rv.km * (2.0 * p1 - 1.0) - rv.kn;
        assert!((ops.a.values().last().unwrap() - expect).abs() <= 1e-12);
        let root = crate::stationary::boundary_root(&spec, 1.0).unwrap();
        assert!((p1 - root).abs() <= 1e-8, "{p1} {root}");
    }

    #[test]
    fn invariants() {
        let (_, ops) = reference();
        assert!(ops.a.values().iter().all(|&v| v < 0.0));
        assert!(ops.omega0 < 0.0);
        assert_eq!(ops.rp_prime.values()[0], 0.0);
        assert!(ops.rp_prime.values()[1].abs() <= 1e-2);
        assert_eq!(ops.kappa, *ops.inner_gc.last().unwrap());
    }

    #[test]
    fn kappa_full_integral() {
        let (sol, ops) = reference();
        let fine = RadialGrid::uniform(2001).unwrap();
        let g = |x: f64| ops.g_c_cz.eval(x) * x * x;
        let vals: Vec<f64> = fine.nodes().iter().map(|&x| g(x)).collect();
        let h = fine.spacing();
        let simpson: f64 = (0..vals.len())
            .map(|i| {
                let w = if i == 0 || i == vals.len() - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * vals[i]
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((simpson - ops.kappa).abs() <= 1e-6 * (1.0 + ops.kappa.abs()), "{simpson} {}", ops.kappa);
        assert!(sol.c_z.sup_norm() > 0.0 && ops.kappa != 0.0);
    }

    #[test]
    fn hooks() {
        let (sol, _) = reference();
        let spec = KineticsSpec::default();
        let ops = build_operators_with(sol, &spec, OperatorHooks { zero_cz: true, g_p: None }).unwrap();
        assert_eq!(ops.kappa, 0.0);
        assert!(ops.b.values().iter().all(|&v| v == 0.0));
        let ops = build_operators_with(sol, &spec, OperatorHooks { zero_cz: false, g_p: Some(3.0) }).unwrap();
        let one = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 1.0);
        assert!((apply_f(&ops, &one).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_inputs() {
        let (sol, ops) = reference();
        let zero = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 0.0);
        assert_eq!(apply_b(ops, &zero).unwrap().sup_norm(), 0.0);
        assert_eq!(apply_f(ops, &zero).unwrap(), 0.0);
        let traj = solve_linearized(ops, &zero, 0.0, 1.0, LinearOptions::default()).unwrap();
        assert!(traj.norm_x0.iter().all(|&v| v == 0.0));
        let other = RadialGrid::uniform(11).unwrap();
        let q = RadialField::from_fn(&other, Interpolation::Cubic, |_| 1.0);
        assert!(matches!(apply_b(ops, &q), Err(LinearizedError::Grid(_))));
    }

    #[test]
    fn b_of_one_refines() {
        let (sol, ops) = reference();
        let one = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 1.0);
        let bq = apply_b(ops, &one).unwrap();
        // Oracle: composite Simpson on a refined grid of the interpolated g_p.
        let integral = |upper: f64| {
            let n = 4000;
            let h = upper / n as f64;
            (0..=n)
                .map(|i| {
                    let x = i as f64 * h;
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * ops.g_p.eval(x) * x * x
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let total = integral(1.0);
        for &i in &[10usize, 50, 100, 150, 200] {
            let r = sol.grid().nodes()[i];
            let expect = ops.rp_prime.values()[i] * (total - integral(r) / r.powi(3));
            assert!((bq.values()[i] - expect).abs() <= 1e-8, "{i} {} {expect}", bq.values()[i]);
        }
    }

    #[test]
    fn block_action_matches_implicit_form() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_smooth_field(sol.grid(), 6, &mut rng);
        let nodal = Samples::at(ops, sol.grid().nodes().to_vec());
        let n = q.len();
        let (mut dv, mut u) = (vec![0.0; n], vec![0.0; n]);
        let (blk, fz) = apply_block(ops, &q, 0.0).unwrap();
        let dz = nodal.rhs(q.values(), 0.0, &mut dv, &mut u);
        assert!((dz - fz).abs() <= 1e-12);
        assert!(dv.iter().zip(blk.values()).all(|(a, b)| (a - b).abs() <= 1e-12));
        let zero = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 0.0);
        let (blk, kz) = apply_block(ops, &zero, 1.0).unwrap();
        let dz = nodal.rhs(zero.values(), 1.0, &mut dv, &mut u);
        assert!((dz - kz).abs() <= 1e-12 && (kz - ops.kappa).abs() <= 1e-15);
        assert!(dv.iter().zip(blk.values()).all(|(a, b)| (a - b).abs() <= 1e-12));
        assert!(blk.values().iter().zip(ops.b.values()).all(|(a, b)| a == b));
    }

    #[test]
    fn derivative_transfer_bounds() {
        // B(u_* q') and F(u_* q') stay bounded by ||q|| uniformly in the
        // frequency of q.
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ratios = vec![[0.0; 2]; 2];
        for (band, &freq) in [2.0, 12.0].iter().enumerate() {
            for _ in 0..10 {
                let (ph, amp) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.5..2.0));
                let k = freq * std::f64::consts::PI;
                let q = |r: f64| amp * (k * r + ph).sin();
                let dq = |r: f64| amp * k * (k * r + ph).cos();
                let uq = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |r| ops.w_star.eval(r) * dq(r));
                let sup = sol.grid().nodes().iter().fold(0.0f64, |m, &r| m.max(q(r).abs()));
                let rb = apply_b(ops, &uq).unwrap().sup_norm() / sup;
                let rf = apply_f(ops, &uq).unwrap().abs() / sup;
                ratios[band][0] = f64::max(ratios[band][0], rb);
                ratios[band][1] = f64::max(ratios[band][1], rf);
            }
        }
        for j in 0..2 {
            assert!(ratios[0][j].is_finite() && ratios[1][j] <= 3.0 * ratios[0][j] + 1e-12, "{ratios:?}");
        }
    }

    #[test]
    fn linearity() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f1 = random_smooth_field(sol.grid(), 5, &mut rng);
        let f2 = random_smooth_field(sol.grid(), 5, &mut rng);
        let sum = RadialField::new(
            sol.grid().clone(),
            f1.values().iter().zip(f2.values()).map(|(a, b)| a + b).collect(),
            Interpolation::Cubic,
        )
        .unwrap();
        let opts = LinearOptions { record_phi: true, output_interval: 1.0, ..Default::default() };
        let solver = LinearSolver::new(ops, opts).unwrap();
        let t_end = 2.5 * solver.period() as f64 * opts.dt;
        let a = solver.solve(&f1, 0.3, t_end).unwrap();
        let b = solver.solve(&f2, -0.7, t_end).unwrap();
        let c = solver.solve(&sum, -0.4, t_end).unwrap();
        assert!(c.regrids >= 2);
        for k in 0..c.len() {
            assert!((a.zeta[k] + b.zeta[k] - c.zeta[k]).abs() <= 1e-10);
            for i in 0..sum.len() {
                assert!((a.phi[k][i] + b.phi[k][i] - c.phi[k][i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn linear_decay() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_smooth_field(sol.grid(), 5, &mut rng);
        let traj = solve_linearized(ops, &q, 0.5, 80.0, LinearOptions { output_interval: 0.5, ..Default::default() }).unwrap();
        let x = traj.decay(NormKind::X).unwrap();
        let x0 = traj.decay(NormKind::X0).unwrap();
        assert!(x.valid && x0.valid, "{x:?} {x0:?}");
        assert!(x.mu_fit > 0.0 && (x.mu_fit - x0.mu_fit).abs() <= 0.2 * x.mu_fit, "{x:?} {x0:?}");
    }
}
