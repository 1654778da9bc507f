//! Concurrent runs over a list of configurations.

use rayon::prelude::*;
use serde::Serialize;

use super::{run_with_cache, ExperimentError, RunConfig, StabilityReport, StationaryCache};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub id: usize,
    pub epsilon: f64,
    pub grid_size: usize,
    pub mu_fit_x: Option<f64>,
    pub mu_fit_x0: Option<f64>,
    pub k_x: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
    /// Sampled `normX` series of the run.
    #[serde(skip)]
    pub norm_x: Vec<f64>,
    #[serde(skip)]
    pub report: Option<StabilityReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Largest amplitude among passing runs.
    pub basin_edge: Option<f64>,
    /// `max/min - 1` of the X-norm rates over passing runs.
    pub mu_spread: Option<f64>,
}

/// Run every configuration, sharing stationary solutions; failures are
/// recorded per row.
pub fn sweep(configs: &[RunConfig]) -> Result<SweepSummary, ExperimentError> {
    if configs.is_empty() {
        return Err(ExperimentError::Config("sweep needs at least one configuration".into()));
    }
    let cache = StationaryCache::new();
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .enumerate()
        .map(|(id, cfg)| {
            let base = SweepRow {
                id,
                epsilon: cfg.perturbation.amplitude,
                grid_size: cfg.grid_size,
                mu_fit_x: None,
                mu_fit_x0: None,
                k_x: None,
                pass: false,
                error: None,
                norm_x: vec![],
                report: None,
            };
            match run_with_cache(cfg, &cache) {
                Ok(run) => SweepRow {
                    mu_fit_x: run.report.fit_x.as_ref().map(|d| d.mu_fit),
                    mu_fit_x0: run.report.fit_x0.as_ref().map(|d| d.mu_fit),
                    k_x: run.report.k_x,
                    pass: run.report.pass,
                    norm_x: run.trajectory.norm_x,
                    report: Some(run.report),
                    ..base
                },
                Err(e) => SweepRow { error: Some(e.to_string()), ..base },
            }
        })
        .collect();
    let passing: Vec<&SweepRow> = rows.iter().filter(|r| r.pass).collect();
    let basin_edge = passing.iter().map(|r| r.epsilon).fold(None, |m: Option<f64>, e| Some(m.map_or(e, |x| x.max(e))));
    let mus: Vec<f64> = passing.iter().filter_map(|r| r.mu_fit_x).collect();
    let mu_spread = if mus.is_empty() {
        None
    } else {
        let lo = mus.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(hi / lo - 1.0)
    };
    Ok(SweepSummary { rows, basin_edge, mu_spread })
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinScan {
    /// `(epsilon, pass)` in the order tried.
    pub tried: Vec<(f64, bool)>,
    /// First passing amplitude walking down the list.
    pub edge: Option<f64>,
}

/// Walk the amplitudes in decreasing order until a run passes.
pub fn scan_epsilon(base: &RunConfig, amplitudes: &[f64]) -> Result<BasinScan, ExperimentError> {
    let mut eps: Vec<f64> = amplitudes.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let cache = StationaryCache::new();
    let mut tried = vec![];
    for e in eps {
        let mut cfg = base.with_amplitude(e);
        cfg.linear_response = false;
        let pass = match run_with_cache(&cfg, &cache) {
            Ok(run) => run.report.pass,
            Err(ExperimentError::Config(msg)) => return Err(ExperimentError::Config(msg)),
            Err(_) => false,
        };
        tried.push((e, pass));
        if pass {
            return Ok(BasinScan { tried, edge: Some(e) });
        }
    }
    Ok(BasinScan { tried, edge: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_agree_and_failures_are_rows() {
        let cfg = RunConfig { grid_size: 61, horizon: 1.0, output_interval: 0.5, linear_response: false, ..Default::default() };
        let mut bad = cfg.clone();
        bad.perturbation.amplitude = 0.5;
        let out = sweep(&[cfg.clone(), cfg.clone(), bad]).unwrap();
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.rows[0].norm_x, out.rows[1].norm_x);
        assert!(out.rows[2].error.is_some());
        assert!(sweep(&[]).is_err());
    }
}
