//! Picard iteration for the quasilinear evolution about the stationary
//! state: given a path `V`, solve `phi_t + w_V phi_r = N(U)`, `z' = u_U(1)`
//! where only the transport coefficient is frozen, and repeat with `V = U`.

use serde::Serialize;

use super::{deviation_norms, TransportError, TransportOptions, TransportSolver, TumorState};
use crate::field::{Interpolation, RadialField};
use crate::kinetics::KineticsSpec;
use crate::nutrient::NutrientCache;
use crate::stationary::StationarySolution;
use crate::velocity::velocity_from_density;

/// Transport velocity `w_V(r, t) = r(1-r) theta_V(r, t)` sampled at equally
/// spaced times and interpolated with four-point Lagrange in time.
#[derive(Debug, Clone)]
pub struct FrozenVelocity {
    t0: f64,
    dt: f64,
    theta: Vec<RadialField>,
}

impl FrozenVelocity {
    /// Velocity path of the states `(p_* + dev[k], z[k])` at `t0 + k dt`.
    pub fn from_deviations(
        spec: &KineticsSpec,
        reference: &StationarySolution,
        t0: f64,
        dt: f64,
        dev: &[Vec<f64>],
        z: &[f64],
    ) -> Result<Self, TransportError> {
        let grid = reference.grid();
        let mut cache = NutrientCache::new(spec, grid);
        let mut theta = Vec::with_capacity(dev.len());
        let ps = reference.p_star.values();
        let cs = reference.c_star.values();
        for (d, &zk) in dev.iter().zip(z) {
            let c = cache.solve(zk)?.c.values();
            let dg: Vec<f64> = (0..grid.len())
                .map(|i| spec.growth(c[i].clamp(0.0, 1.0), ps[i] + d[i]) - spec.growth(cs[i], ps[i]))
                .collect();
            let vel = velocity_from_density(grid, dg).map_err(|e| match e {
                crate::velocity::VelocityError::Grid(g) => TransportError::Grid(g),
            })?;
            let th: Vec<f64> =
                vel.w_over_weight.values().iter().zip(reference.theta_star.values()).map(|(a, b)| a + b).collect();
            theta.push(RadialField::new(grid.clone(), th, Interpolation::Cubic)?);
        }
        Ok(Self { t0, dt, theta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn time_weights(&self, t: f64) -> (Vec<usize>, Vec<f64>) {
        let n = self.theta.len();
        let s = ((t - self.t0) / self.dt).clamp(0.0, (n - 1) as f64);
        let base = (s.floor() as usize).saturating_sub(1).min(n.saturating_sub(4));
        let idx: Vec<usize> = (base..(base + 4).min(n)).collect();
        let mut weights = vec![1.0; idx.len()];
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx {
                if j != i {
                    weights[a] *= (s - j as f64) / (i as f64 - j as f64);
                }
            }
        }
        (idx, weights)
    }

    /// `theta_V(r, t)` and its `r`-derivative at a single point.
    pub fn theta_at(&self, r: f64, t: f64) -> (f64, f64) {
        let (idx, weights) = self.time_weights(t);
        idx.iter().zip(&weights).fold((0.0, 0.0), |(v, d), (&i, &w)| {
            (v + w * self.theta[i].eval(r), d + w * self.theta[i].eval_deriv(r))
        })
    }

    /// `w_V(x_i, t)` at sorted positions.
    pub fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (idx, weights) = self.time_weights(t);
        let mut tmp = vec![0.0; x.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, &i) in idx.iter().enumerate() {
            if weights[a] == 0.0 {
                continue;
            }
            self.theta[i].eval_sorted(x, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += weights[a] * v;
            }
        }
        for (o, &xi) in out.iter_mut().zip(x) {
            *o *= xi * (1.0 - xi);
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PicardOptions {
    pub transport: TransportOptions,
    /// Weight `e^{mu t}` in the iterate distance.
    pub mu: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { transport: TransportOptions::default(), mu: 0.0, max_iters: 20, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardResult {
    /// Converged iterate, sampled every `transport.output_interval`.
    pub trajectory: super::Trajectory,
    /// `d(V^{n+1}, V^n) = sup_t e^{mu t} ||V^{n+1} - V^n||_X`.
    pub distances: Vec<f64>,
    pub converged: bool,
}

impl PicardResult {
    /// Successive distance ratios above `floor`.
    pub fn ratios(&self, floor: f64) -> Vec<f64> {
        self.distances.windows(2).filter(|w| w[1] > floor).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PicardError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("Picard iteration diverged; distances {distances:?}")]
    Diverged { distances: Vec<f64> },
}

/// Solve by Picard iteration starting from `V^0(t) = e^{-mu t} U_0`.
pub fn picard_solve(
    initial: &TumorState,
    t_end: f64,
    spec: &KineticsSpec,
    reference: &StationarySolution,
    opts: PicardOptions,
) -> Result<PicardResult, PicardError> {
    let dt = opts.transport.dt;
    let steps = ((t_end - initial.t) / dt).round() as usize;
    let t0 = initial.t;
    let dev0: Vec<f64> = initial.p.values().iter().zip(reference.p_star.values()).map(|(a, b)| a - b).collect();
    let zeta0 = initial.z - reference.z_star;
    let times: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    let mut dev: Vec<Vec<f64>> =
        times.iter().map(|&t| dev0.iter().map(|d| d * (-opts.mu * (t - t0)).exp()).collect()).collect();
    let mut z: Vec<f64> = times.iter().map(|&t| reference.z_star + zeta0 * (-opts.mu * (t - t0)).exp()).collect();

    let fine = TransportOptions { output_interval: dt, record_deviations: true, deviation: true, ..opts.transport };
    let r = reference.grid().nodes();
    let mut distances = vec![];
    let mut increases = 0;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let path = FrozenVelocity::from_deviations(spec, reference, t0, dt, &dev, &z)?;
        let traj = TransportSolver::new(spec, reference, initial, fine)?.with_frozen_velocity(path).run(t_end)?;
        let mut d = 0.0f64;
        for k in 0..traj.len() {
            let diff: Vec<f64> = traj.deviations[k].iter().zip(&dev[k]).map(|(a, b)| a - b).collect();
            let (nx, _) = deviation_norms(r, &diff, traj.z[k] - z[k]);
            d = d.max((opts.mu * (times[k] - t0)).exp() * nx);
        }
        if let Some(&last) = distances.last() {
            if d > last {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        distances.push(d);
        dev = traj.deviations;
        z = traj.z;
        if increases >= 2 {
            return Err(PicardError::Diverged { distances });
        }
        if d < opts.tol {
            converged = true;
            break;
        }
    }
    let every = ((opts.transport.output_interval / dt).round() as usize).max(1);
    let mut out = super::Trajectory::new();
    for k in (0..=steps).step_by(every) {
        let (nx, nx0) = deviation_norms(r, &dev[k], z[k] - reference.z_star);
        out.times.push(times[k]);
        out.z.push(z[k]);
        out.norm_x.push(nx);
        out.norm_x0.push(nx0);
        out.p_center.push(reference.p_star.values()[0] + dev[k][0]);
        out.p_boundary.push(reference.p_star.values()[r.len() - 1] + dev[k][r.len() - 1]);
        if opts.transport.record_deviations {
            out.deviations.push(dev[k].clone());
        }
    }
    Ok(PicardResult { trajectory: out, distances, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RadialField;
    use crate::transport::tests::reference;
    use crate::transport::simulate;

    #[test]
    fn stationary_start_is_fixed() {
        let s = reference();
        let spec = KineticsSpec::default();
        let res = picard_solve(&TumorState::stationary(s), 0.5, &spec, s, PicardOptions { mu: 0.02, ..Default::default() })
            .unwrap();
        assert!(res.distances[0] <= 1e-8, "{:?}", res.distances);
    }

    #[test]
    fn matches_direct_solver() {
        let s = reference();
        let spec = KineticsSpec::default();
        let eps = 1e-3;
        let p = s.p_star.map(Interpolation::Cubic, |r, v| v + eps * r * (1.0 - r));
        let init = TumorState::new(0.0, RadialField::new(s.grid().clone(), p.values().to_vec(), Interpolation::MonotoneCubic).unwrap(), s.z_star + eps);
        let opts = PicardOptions { mu: 0.02, ..Default::default() };
        let res = picard_solve(&init, 1.0, &spec, s, opts).unwrap();
        assert!(res.converged, "{:?}", res.distances);
        let direct = simulate(&init, 1.0, &spec, s, TransportOptions::default()).unwrap();
        for (a, b) in direct.norm_x.iter().zip(&res.trajectory.norm_x) {
            assert!((a - b).abs() <= 1e-6, "{a} {b}");
        }
        assert!(res.ratios(1e-11).iter().all(|&q| q <= 0.5), "{:?}", res.distances);
    }
}
