//! Exponential decay fits `norm(t) ~ K e^{-mu t}` by least squares on the
//! log-norm.

use serde::{Deserialize, Serialize};

use super::LinearizedError;
use crate::stationary::least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    X,
    X0,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::X => "X",
            NormKind::X0 => "X0",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub mu_fit: f64,
    pub k_fit: f64,
    pub window: (f64, f64),
    pub norm_kind: NormKind,
    pub r2: f64,
    /// Smoothed log-norm non-increasing over the window.
    pub monotone: bool,
    pub valid: bool,
    pub samples: usize,
}

/// Minimum coefficient of determination for a valid fit.
pub const MIN_R2: f64 = 0.98;

/// Fit over the last 70% of the series.
pub fn fit_decay(times: &[f64], norms: &[f64], kind: NormKind) -> Result<DecayReport, LinearizedError> {
    fit_decay_from(times, norms, kind, 0.3)
}

/// Fit over the part of the series after the fraction `skip` of its span.
pub fn fit_decay_from(times: &[f64], norms: &[f64], kind: NormKind, skip: f64) -> Result<DecayReport, LinearizedError> {
    let n = times.len().min(norms.len());
    if n < 4 {
        return Err(LinearizedError::TooFewSamples { samples: n });
    }
    let (first, last) = (norms[0], norms[n - 1]);
    if !(last <= 1e-2 * first) {
        return Err(LinearizedError::InsufficientDecay { first, last });
    }
    let (t0, t1) = (times[0], times[n - 1]);
    let start = t0 + skip * (t1 - t0);
    let pts: Vec<(f64, f64)> =
        (0..n).filter(|&k| times[k] >= start - 1e-12 && norms[k] > 0.0).map(|k| (times[k], norms[k].ln())).collect();
    if pts.len() < 4 {
        return Err(LinearizedError::TooFewSamples { samples: pts.len() });
    }
    let (slope, intercept) = least_squares(&pts);
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let monotone = smoothed_nonincreasing(&pts);
    Ok(DecayReport {
        mu_fit: -slope,
        k_fit: intercept.exp(),
        window: (pts[0].0, t1),
        norm_kind: kind,
        r2,
        monotone,
        valid: r2 >= MIN_R2 && monotone && slope < 0.0,
        samples: pts.len(),
    })
}

/// Moving average over a twentieth of the window, then a step check.
fn smoothed_nonincreasing(pts: &[(f64, f64)]) -> bool {
    let half = (pts.len() / 40).max(1);
    let avg: Vec<f64> = (half..pts.len() - half)
        .map(|k| pts[k - half..=k + half].iter().map(|p| p.1).sum::<f64>() / (2 * half + 1) as f64)
        .collect();
    avg.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(t_end: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=(t_end * 10.0) as usize).map(|k| k as f64 * 0.1).collect();
        let v = t.iter().map(|&s| f(s)).collect();
        (t, v)
    }

    #[test]
    fn exact_exponential() {
        let (t, v) = series(40.0, |s| 2.0 * (-0.3 * s).exp());
        let d = fit_decay(&t, &v, NormKind::X).unwrap();
        assert!((d.mu_fit - 0.3).abs() <= 1e-6 && (d.k_fit - 2.0).abs() <= 1e-6);
        assert!(d.valid && (d.r2 - 1.0).abs() <= 1e-12);
        assert!((d.window.0 - 12.0).abs() <= 1e-9 && d.window.1 == 40.0);
    }

    #[test]
    fn polynomial_envelope() {
        let sigma = 0.3;
        let mut prev = 0.0;
        for &t_end in &[60.0, 120.0, 240.0, 480.0] {
            let (t, v) = series(t_end, |s| (1.0 + s).powi(2) * (-sigma * s).exp());
            let d = fit_decay(&t, &v, NormKind::X0).unwrap();
            assert!(d.mu_fit < sigma && d.mu_fit > prev, "{t_end} {}", d.mu_fit);
            prev = d.mu_fit;
        }
        assert!(sigma - prev < 0.02);
    }

    #[test]
    fn too_little_decay() {
        let (t, v) = series(10.0, |s| (-0.1 * s).exp());
        assert!(matches!(fit_decay(&t, &v, NormKind::X), Err(LinearizedError::InsufficientDecay { .. })));
    }

    #[test]
    fn bump_is_not_monotone() {
        let (t, v) = series(40.0, |s| (-0.3 * s).exp() * (1.0 + 3.0 * (-(s - 30.0).powi(2) / 4.0).exp()));
        let d = fit_decay(&t, &v, NormKind::X).unwrap();
        assert!(!d.monotone && !d.valid);
    }
}
