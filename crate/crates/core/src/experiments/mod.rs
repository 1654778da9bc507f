//! Run configuration, the stability experiment about the stationary state,
//! sweeps over configurations, and persisted reports.
//!
//! Everything runs in the rescaled variables `p(r, t)`, `z = log R`, so the
//! deviations measured here are the `X` and `X_0` norms directly.

mod report;
mod sweep;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{config_hash, emit_report, fmt_float, read_manifest, trajectory_rows, write_table, EmittedFiles, Manifest, TRAJECTORY_HEADER};
pub use sweep::{scan_epsilon, sweep, BasinScan, SweepRow, SweepSummary};

use crate::field::{lagrange_slopes, GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::{KineticsError, KineticsSpec};
use crate::linearized::{
    build_operators, fit_decay_from, DecayReport, LinearOptions, LinearSolver, LinearizedError, NormKind,
};
use crate::simmaps::MapError;
use crate::stationary::{solve_stationary, StationaryError, StationarySolution};
use crate::transport::picard::{picard_solve, PicardError, PicardOptions};
use crate::transport::{deviation_norms, Trajectory, TransportError, TransportOptions, TransportSolver, TumorState};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    /// Nonlinear solver failure with the samples recorded before it.
    #[error("{source}")]
    Solver {
        #[source]
        source: TransportError,
        partial: Option<Box<Trajectory>>,
    },
    #[error(transparent)]
    Picard(#[from] PicardError),
    #[error(transparent)]
    Linearized(#[from] LinearizedError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<TransportError> for ExperimentError {
    fn from(source: TransportError) -> Self {
        ExperimentError::Solver { source, partial: None }
    }
}

impl ExperimentError {
    /// Process exit code: 3 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Kinetics(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `r(1-r)`
    Poly,
    /// `cos(pi r)`
    Sine,
    /// `exp(-((r - 1/2)/0.15)^2)`, shifted to vanish at both ends.
    Bump,
}

impl Shape {
    pub fn eval(self, r: f64) -> f64 {
        match self {
            Shape::Poly => r * (1.0 - r),
            Shape::Sine => (std::f64::consts::PI * r).cos(),
            Shape::Bump => {
                let g = |x: f64| (-((x - 0.5) / 0.15).powi(2)).exp();
                g(r) - g(0.0)
            }
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "poly" => Ok(Shape::Poly),
            "sine" => Ok(Shape::Sine),
            "bump" => Ok(Shape::Bump),
            other => Err(format!("unknown shape {other:?} (poly, sine, bump)")),
        }
    }
}

/// Initial data `p_0 = p_* + eps shape(r)`, `z_0 = z_* + eps z_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub shape: Shape,
    pub amplitude: f64,
    pub z_offset: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { shape: Shape::Poly, amplitude: 1e-2, z_offset: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Direct,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub manifest: String,
    pub trajectory: String,
    pub decay: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            manifest: "manifest.json".into(),
            trajectory: "trajectory.csv".into(),
            decay: "decay.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kinetics: KineticsSpec,
    pub grid_size: usize,
    pub dt: f64,
    pub horizon: f64,
    pub output_interval: f64,
    pub perturbation: Perturbation,
    pub solver: SolverChoice,
    pub output: OutputPaths,
    pub seed: u64,
    pub z_bracket: [f64; 2],
    /// Also run the same data at a tenth of the amplitude.
    pub linear_response: bool,
    /// Span over which the nonlinear deviation is compared to the linearized
    /// solution.
    pub consistency_window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kinetics: KineticsSpec::default(),
            grid_size: 801,
            dt: 1e-2,
            horizon: 80.0,
            output_interval: 0.1,
            perturbation: Perturbation::default(),
            solver: SolverChoice::Direct,
            output: OutputPaths::default(),
            seed: 0,
            z_bracket: [-2.0, 2.0],
            linear_response: true,
            consistency_window: 5.0,
        }
    }
}

/// Largest admissible perturbation amplitude.
pub const MAX_AMPLITUDE: f64 = 0.1;

/// Share of the horizon excluded from fits and envelope checks.
pub const TRANSIENT_FRACTION: f64 = 0.2;

/// Relative slack on the fitted envelope.
pub const ENVELOPE_SLACK: f64 = 0.05;

/// Shortest horizon of the linear run that sets the Picard weight.
pub const PICARD_RATE_HORIZON: f64 = 80.0;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.kinetics.check()?;
        let bad = |what: &str, v: f64| ExperimentError::Config(format!("{what} must be positive and finite (got {v})"));
        for (name, v) in [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("output_interval", self.output_interval),
            ("consistency_window", self.consistency_window),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, v));
            }
        }
        if self.grid_size < 11 {
            return Err(ExperimentError::Config(format!("grid_size must be at least 11 (got {})", self.grid_size)));
        }
        let eps = self.perturbation.amplitude;
        if !(0.0..=MAX_AMPLITUDE).contains(&eps) {
            return Err(ExperimentError::Config(format!("amplitude must lie in [0, {MAX_AMPLITUDE}] (got {eps})")));
        }
        if !self.perturbation.z_offset.is_finite() {
            return Err(ExperimentError::Config("z_offset must be finite".into()));
        }
        if !(self.z_bracket[0] < self.z_bracket[1]) {
            return Err(ExperimentError::Config(format!("z_bracket {:?} is not increasing", self.z_bracket)));
        }
        if self.output_interval < self.dt {
            return Err(ExperimentError::Config("output_interval is shorter than dt".into()));
        }
        // TOML integers are signed.
        if i64::try_from(self.seed).is_err() {
            return Err(ExperimentError::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        Ok(())
    }

    /// Same run at a different amplitude.
    pub fn with_amplitude(&self, eps: f64) -> Self {
        let mut c = self.clone();
        c.perturbation.amplitude = eps;
        c
    }

    fn transport_options(&self) -> TransportOptions {
        TransportOptions {
            dt: self.dt,
            dt_max: self.dt,
            output_interval: self.output_interval,
            record_deviations: true,
            ..Default::default()
        }
    }

    fn linear_options(&self) -> LinearOptions {
        LinearOptions { dt: self.dt, output_interval: self.output_interval, record_phi: true, ..Default::default() }
    }
}

/// Stationary solutions shared between runs with the same kinetics and grid.
#[derive(Default)]
pub struct StationaryCache {
    entries: Mutex<HashMap<String, Arc<StationarySolution>>>,
}

impl StationaryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &RunConfig) -> Result<Arc<StationarySolution>, ExperimentError> {
        let key = serde_json::to_string(&(&cfg.kinetics, cfg.grid_size, cfg.z_bracket)).expect("key serializes");
        if let Some(sol) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(sol.clone());
        }
        let grid = RadialGrid::uniform(cfg.grid_size)?;
        let sol = Arc::new(solve_stationary(&cfg.kinetics, (cfg.z_bracket[0], cfg.z_bracket[1]), &grid)?);
        self.entries.lock().expect("cache lock").entry(key).or_insert_with(|| sol.clone());
        Ok(sol)
    }
}

/// Initial state from the perturbation family.
pub fn initial_state(cfg: &RunConfig, sol: &StationarySolution) -> Result<TumorState, ExperimentError> {
    let pert = cfg.perturbation;
    let grid = sol.grid();
    let p: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(sol.p_star.values())
        .map(|(&r, &ps)| ps + pert.amplitude * pert.shape.eval(r))
        .collect();
    if let Some(i) = p.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(ExperimentError::Config(format!(
            "initial p = {} leaves [0, 1] at r = {}",
            p[i],
            grid.nodes()[i]
        )));
    }
    let p = RadialField::new(grid.clone(), p, Interpolation::MonotoneCubic)?;
    Ok(TumorState::new(0.0, p, sol.z_star + pert.amplitude * pert.z_offset))
}

/// One pointwise surrogate `quantity(t) <= K eps e^{-mu t}`.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    /// Norm whose fitted envelope bounds the quantity.
    pub envelope: NormKind,
    /// Largest `quantity / (K eps e^{-mu t})` after the transient window.
    pub worst_ratio: f64,
    pub max_over_eps: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearResponse {
    pub companion_epsilon: f64,
    /// Range of `normX(eps) / normX(eps/10)` over the samples.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Ratio of the time maxima of the sup-norm deviation.
    pub ratio_of_maxima: f64,
}

impl LinearResponse {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.ratio_min >= lo && self.ratio_max <= hi
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardSummary {
    pub mu: f64,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
    /// `max_t |normX_picard - normX_direct|`.
    pub direct_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub grid_size: usize,
    pub horizon: f64,
    pub solver: SolverChoice,
    pub z_star: f64,
    pub fit_x: Option<DecayReport>,
    pub fit_x0: Option<DecayReport>,
    /// `K` relative to the amplitude: `k_fit / eps`.
    pub k_x: Option<f64>,
    pub k_x0: Option<f64>,
    pub max_norm_x_over_eps: f64,
    pub max_norm_x0_over_eps: f64,
    /// `max_t |R - R_*| / eps` with `R = e^z`.
    pub max_radius_over_eps: f64,
    pub inequalities: Vec<InequalityCheck>,
    /// The quiescent deviations agree with the proliferating ones.
    pub q_matches_p: bool,
    /// Zero amplitude: all deviations stay below `1e-6`.
    pub trivial: bool,
    pub linear_response: Option<LinearResponse>,
    pub companion: Option<Box<StabilityReport>>,
    /// `max ||U - U_* - eps V_lin||_X / eps` over the consistency window.
    pub linear_deviation: Option<f64>,
    pub linear_mu: Option<f64>,
    pub picard: Option<PicardSummary>,
    pub stationary_residual: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// A finished experiment: the report with its configuration and trajectory.
#[derive(Debug, Clone)]
pub struct StabilityRun {
    pub config: RunConfig,
    pub report: StabilityReport,
    pub trajectory: Trajectory,
}

pub fn run_stability_experiment(cfg: &RunConfig) -> Result<StabilityRun, ExperimentError> {
    run_with_cache(cfg, &StationaryCache::new())
}

pub fn run_with_cache(cfg: &RunConfig, cache: &StationaryCache) -> Result<StabilityRun, ExperimentError> {
    cfg.validate()?;
    let sol = cache.get(cfg)?;
    let init = initial_state(cfg, &sol)?;
    let eps = cfg.perturbation.amplitude;
    let mut notes = vec![];

    let needs_linear = eps > 0.0 || cfg.solver == SolverChoice::Picard;
    let ops = if needs_linear { Some(build_operators(&sol, &cfg.kinetics)?) } else { None };
    let shape = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |r| cfg.perturbation.shape.eval(r));

    let direct = || -> Result<Trajectory, ExperimentError> {
        let mut solver = TransportSolver::new(&cfg.kinetics, &sol, &init, cfg.transport_options())?;
        match solver.run_partial(cfg.horizon) {
            (traj, None) => Ok(traj),
            (traj, Some(source)) => Err(ExperimentError::Solver { source, partial: Some(Box::new(traj)) }),
        }
    };

    let (trajectory, picard, linear_mu) = match cfg.solver {
        SolverChoice::Direct => (direct()?, None, None),
        SolverChoice::Picard => {
            let ops = ops.as_ref().expect("operators built");
            let lin = LinearSolver::new(ops, cfg.linear_options())?.solve(&shape, cfg.perturbation.z_offset, cfg.horizon.max(PICARD_RATE_HORIZON))?;
            let mu_lin = lin.decay(NormKind::X)?.mu_fit;
            let popts = PicardOptions { transport: cfg.transport_options(), mu: 0.5 * mu_lin, ..Default::default() };
            let res = picard_solve(&init, cfg.horizon, &cfg.kinetics, &sol, popts)?;
            let reference = direct()?;
            let direct_gap = res
                .trajectory
                .norm_x
                .iter()
                .zip(&reference.norm_x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let summary = PicardSummary {
                mu: popts.mu,
                ratios: res.ratios(1e-11),
                distances: res.distances.clone(),
                converged: res.converged,
                direct_gap,
            };
            if !res.converged {
                notes.push("Picard iteration stopped before reaching its tolerance".into());
            }
            (res.trajectory, Some(summary), Some(mu_lin))
        }
    };

    let mut report = evaluate(cfg, &sol, &trajectory, &mut notes);
    report.picard = picard;
    report.linear_mu = linear_mu;

    if eps > 0.0 {
        let ops = ops.as_ref().expect("operators built");
        let opts = cfg.linear_options();
        let lin = LinearSolver::new(ops, opts)?.solve(&shape, cfg.perturbation.z_offset, cfg.consistency_window)?;
        let r = sol.grid().nodes();
        let mut worst = 0.0f64;
        for (k, &t) in lin.times.iter().enumerate() {
            let Some(j) = trajectory.times.iter().position(|&s| (s - t).abs() <= 1e-9) else { continue };
            let Some(dev) = trajectory.deviations.get(j) else { continue };
            let diff: Vec<f64> = dev.iter().zip(&lin.phi[k]).map(|(d, l)| d - eps * l).collect();
            let dz = trajectory.z[j] - sol.z_star - eps * lin.zeta[k];
            worst = worst.max(deviation_norms(r, &diff, dz).0 / eps);
        }
        report.linear_deviation = Some(worst);
    }

    if cfg.linear_response && eps > 0.0 {
        let mut sub = cfg.with_amplitude(eps / 10.0);
        sub.linear_response = false;
        sub.solver = SolverChoice::Direct;
        let companion = run_with_cache(&sub, cache)?;
        let (a, b) = (&trajectory.norm_x, &companion.trajectory.norm_x);
        let ratios: Vec<f64> = a.iter().zip(b).filter(|(_, &y)| y > 0.0).map(|(x, y)| x / y).collect();
        let sup = |t: &Trajectory| t.deviations.iter().map(|d| d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
        report.linear_response = Some(LinearResponse {
            companion_epsilon: eps / 10.0,
            ratio_min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            ratio_max: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ratio_of_maxima: sup(&trajectory) / sup(&companion.trajectory),
        });
        report.companion = Some(Box::new(companion.report));
    }
    report.notes = notes;
    Ok(StabilityRun { config: cfg.clone(), report, trajectory })
}

/// Fits and surrogate inequalities for one trajectory.
fn evaluate(cfg: &RunConfig, sol: &StationarySolution, traj: &Trajectory, notes: &mut Vec<String>) -> StabilityReport {
    let eps = cfg.perturbation.amplitude;
    let r = sol.grid().nodes();
    let n = traj.len();
    let mut sup_p = vec![0.0; n];
    let mut wd_p = vec![0.0; n];
    let mut sup_q = vec![0.0; n];
    let mut wd_q = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut radius = vec![0.0; n];
    let ps = sol.p_star.values();
    for k in 0..n {
        let dev = &traj.deviations[k];
        let q_dev: Vec<f64> = dev.iter().zip(ps).map(|(d, p)| (1.0 - (p + d)) - (1.0 - p)).collect();
        let weighted = |v: &[f64]| {
            let d = lagrange_slopes(r, v);
            r.iter().zip(&d).fold(0.0f64, |m, (&x, &dv)| m.max((x * (1.0 - x) * dv).abs()))
        };
        sup_p[k] = dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        sup_q[k] = q_dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        wd_p[k] = weighted(dev);
        wd_q[k] = weighted(&q_dev);
        dz[k] = (traj.z[k] - sol.z_star).abs();
        radius[k] = (traj.z[k].exp() - sol.r_star).abs();
    }
    let q_matches_p = (0..n).all(|k| {
        (sup_p[k] - sup_q[k]).abs() <= 1e-13 * (1.0 + sup_p[k]) && (wd_p[k] - wd_q[k]).abs() <= 1e-10 * (1.0 + wd_p[k])
    });
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let over = |v: f64| if eps > 0.0 { v / eps } else { v };
    let mut report = StabilityReport {
        epsilon: eps,
        grid_size: cfg.grid_size,
        horizon: cfg.horizon,
        solver: cfg.solver,
        z_star: sol.z_star,
        fit_x: None,
        fit_x0: None,
        k_x: None,
        k_x0: None,
        max_norm_x_over_eps: over(max(&traj.norm_x)),
        max_norm_x0_over_eps: over(max(&traj.norm_x0)),
        max_radius_over_eps: over(max(&radius)),
        inequalities: vec![],
        q_matches_p,
        trivial: eps == 0.0,
        linear_response: None,
        companion: None,
        linear_deviation: None,
        linear_mu: None,
        picard: None,
        stationary_residual: sol.residual_report.transport.max(sol.residual_report.nutrient),
        pass: false,
        notes: vec![],
    };
    if eps == 0.0 {
        report.pass = max(&traj.norm_x0) <= 1e-6;
        return report;
    }
    let mut fit = |norms: &[f64], kind| match fit_decay_from(&traj.times, norms, kind, TRANSIENT_FRACTION) {
        Ok(d) => Some(d),
        Err(e) => {
            notes.push(format!("{kind} fit: {e}"));
            None
        }
    };
    report.fit_x = fit(&traj.norm_x, NormKind::X);
    report.fit_x0 = fit(&traj.norm_x0, NormKind::X0);
    report.k_x = report.fit_x.as_ref().map(|d| d.k_fit / eps);
    report.k_x0 = report.fit_x0.as_ref().map(|d| d.k_fit / eps);
    let start = traj.times[0] + TRANSIENT_FRACTION * (traj.times[n - 1] - traj.times[0]);
    let quantities: [(&str, NormKind, &[f64]); 6] = [
        ("normX", NormKind::X, &traj.norm_x),
        ("normX0", NormKind::X0, &traj.norm_x0),
        ("sup|p-p*|", NormKind::X, &sup_p),
        ("sup r(1-r)|d(p-p*)|", NormKind::X0, &wd_p),
        ("sup|q-q*|", NormKind::X, &sup_q),
        ("sup r(1-r)|d(q-q*)|", NormKind::X0, &wd_q),
    ];
    let mut checks: Vec<InequalityCheck> = quantities
        .iter()
        .map(|&(name, kind, v)| envelope_check(name, kind, v, &traj.times, start, eps, &report))
        .collect();
    checks.push(envelope_check("|z-z*|", NormKind::X, &dz, &traj.times, start, eps, &report));
    let fits_ok = [&report.fit_x, &report.fit_x0].iter().all(|f| f.as_ref().is_some_and(|d| d.valid && d.mu_fit > 0.0));
    report.pass = fits_ok && q_matches_p && checks.iter().all(|c| c.pass);
    report.inequalities = checks;
    report
}

fn envelope_check(
    name: &str,
    kind: NormKind,
    values: &[f64],
    times: &[f64],
    start: f64,
    eps: f64,
    report: &StabilityReport,
) -> InequalityCheck {
    let fit = match kind {
        NormKind::X => &report.fit_x,
        NormKind::X0 => &report.fit_x0,
    };
    let max_over_eps = values.iter().cloned().fold(0.0, f64::max) / eps;
    let Some(fit) = fit else {
        return InequalityCheck { name: name.into(), envelope: kind, worst_ratio: f64::INFINITY, max_over_eps, pass: false };
    };
    let k = fit.k_fit / eps;
    let worst = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= start - 1e-12)
        .map(|(&t, &v)| v / (k * eps * (-fit.mu_fit * t).exp()))
        .fold(0.0, f64::max);
    InequalityCheck { name: name.into(), envelope: kind, worst_ratio: worst, max_over_eps, pass: worst <= 1.0 + ENVELOPE_SLACK }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig { grid_size: 101, horizon: 80.0, output_interval: 0.5, linear_response: false, ..Default::default() }
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig { seed: 42, perturbation: Perturbation { shape: Shape::Bump, amplitude: 3e-3, z_offset: -0.5 }, ..Default::default() };
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        let partial = RunConfig::from_toml("grid_size = 201\n[perturbation]\nshape = \"sine\"\namplitude = 0.05\nz_offset = 0.0\n").unwrap();
        assert_eq!(partial.grid_size, 201);
        assert_eq!(partial.perturbation.shape, Shape::Sine);
    }

    #[test]
    fn config_rejections() {
        let too_big = RunConfig::default().with_amplitude(0.2);
        assert!(matches!(too_big.validate(), Err(ExperimentError::Config(_))));
        let cfg = RunConfig { dt: -1.0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 3);
        assert!(RunConfig::from_toml("grid_size = 201\nbogus = 1\n").is_err());
        let mut cfg = RunConfig::default();
        cfg.kinetics.d_rate = 2.0;
        assert!(matches!(cfg.validate(), Err(ExperimentError::Kinetics(_))));
        let cfg = RunConfig { seed: u64::MAX, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn zero_amplitude_is_trivial() {
        let cfg = RunConfig { horizon: 2.0, grid_size: 201, ..small() }.with_amplitude(0.0);
        let run = run_stability_experiment(&cfg).unwrap();
        assert!(run.report.trivial && run.report.pass, "{:?}", run.trajectory.norm_x0);
        assert!(run.trajectory.norm_x0.iter().all(|&v| v <= 1e-6));
        assert!(run.report.q_matches_p);
    }

    #[test]
    fn small_perturbation_passes() {
        let run = run_stability_experiment(&small()).unwrap();
        let rep = &run.report;
        assert!(rep.pass, "{:#?}", rep);
        assert!(rep.fit_x.as_ref().unwrap().mu_fit > 0.0);
        assert!(rep.q_matches_p);
        assert!(rep.linear_deviation.unwrap() <= 0.05);
        assert_eq!(run.trajectory.len(), 161);
    }
}
