//! Adaptive Dormand–Prince 5(4) integrator for small dense systems.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("too many steps ({steps}) before reaching t = {target}")]
    TooManySteps { steps: usize, target: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-13, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

/// Outcome of an integration that may stop early.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    Reached,
    /// The stop predicate fired; the state is the last accepted one.
    Halted { t: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `t0` to `t1` (either direction), updating
/// `y` in place. `observe` sees every accepted step `(t, y, y')` and may
/// return `false` to halt.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    tol: Tolerance,
    mut observe: O,
) -> Result<Stop, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64], &[f64]) -> bool,
{
    let n = y.len();
    if t1 == t0 {
        return Ok(Stop::Reached);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = t0;
    f(t, y, &mut k[0]);

    let d0 = scaled_rms(y, y, tol);
    let d1 = scaled_rms(&k[0], y, tol);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span.max(1.0) } else { 0.01 * d0 / d1 };
    h = h.min(span).min(tol.h_max).max(1e-12 * span);
    let mut steps = 0usize;
    let mut last_ratio = 1e-4f64;
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-15 * span.max(t.abs()) {
            return Ok(Stop::Reached);
        }
        if steps >= tol.max_steps {
            return Err(OdeError::TooManySteps { steps, target: t1 });
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        let stage = |tmp: &mut Vec<f64>, k: &Vec<Vec<f64>>, coeffs: &[(usize, f64)]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(j, a) in coeffs {
                    acc += hs * a * k[j][i];
                }
                tmp[i] = acc;
            }
        };
        stage(&mut tmp, &k, &[(0, A21)]);
        f(t + C2 * hs, &tmp, &mut k[1]);
        stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
        f(t + C3 * hs, &tmp, &mut k[2]);
        stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
        f(t + C4 * hs, &tmp, &mut k[3]);
        stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        f(t + C5 * hs, &tmp, &mut k[4]);
        stage(&mut tmp, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        f(t + hs, &tmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i] + hs * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        let tnew = if last { t1 } else { t + hs };
        f(tnew, &ynew, &mut k[6]);
        let mut err = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / n as f64).sqrt();
        steps += 1;
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-14 * span {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }
        if err <= 1.0 {
            t = tnew;
            y.copy_from_slice(&ynew);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
            if !observe(t, y, &k[0]) {
                return Ok(Stop::Halted { t });
            }
            // PI step control.
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * last_ratio.powf(0.4 / 5.0);
            last_ratio = err.max(1e-4);
            h *= fac.clamp(0.2, 5.0);
            h = h.min(tol.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < 1e-14 * span.max(t.abs()) {
            return Err(OdeError::StepUnderflow { t });
        }
    }
}

fn scaled_rms(v: &[f64], scale: &[f64], tol: Tolerance) -> f64 {
    let s: f64 = v
        .iter()
        .zip(scale)
        .map(|(v, s)| {
            let sc = tol.atol + tol.rtol * s.abs();
            (v / sc) * (v / sc)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Integrate without observation.
pub fn solve<F>(f: F, t0: f64, t1: f64, y: &mut [f64], tol: Tolerance) -> Result<(), OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate(f, t0, t1, y, tol, |_, _, _| true).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let mut y = [1.0];
        solve(|_, y, d| d[0] = y[0], 0.0, 2.0, &mut y, Tolerance { rtol: 1e-12, atol: 1e-14, ..Default::default() })
            .unwrap();
        assert!((y[0] - 2f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_harmonic_oscillator() {
        let mut y = [0.0, 1.0];
        solve(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            -3.0,
            &mut y,
            Tolerance { rtol: 1e-12, atol: 1e-14, ..Default::default() },
        )
        .unwrap();
        assert!((y[0] - (-3f64).sin()).abs() < 1e-10);
        assert!((y[1] - (-3f64).cos()).abs() < 1e-10);
    }

    #[test]
    fn halts_on_request() {
        let mut y = [0.0];
        let stop = integrate(|_, _, d| d[0] = 1.0, 0.0, 10.0, &mut y, Tolerance::default(), |_, y, _| y[0] < 1.0)
            .unwrap();
        assert!(matches!(stop, Stop::Halted { .. }));
        assert!(y[0] >= 1.0);
    }
}
