//! Resolvent of `A q = -w q' + a q` and the multiplier semigroup it
//! generates.
//!
//! Along the upstream characteristic `X(sigma) = F^{-1}(F(r) + sigma)`,
//! which moves at unit speed in the travel-time coordinate,
//! `(A - lambda) q = f` integrates to
//! `q(r) = -int_0^inf f(X) exp(int_0^sigma (a(X) - lambda)) dsigma`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::LinearizedError;
use crate::field::{lagrange_slopes, Interpolation, RadialField};
use crate::ode::{solve, Tolerance};
use crate::simmaps::{FStarTable, DEFAULT_DX};

#[derive(Debug, Clone)]
pub struct Resolvent {
    pub q: Vec<Complex64>,
    pub lambda: Complex64,
    /// Truncation length in the travel-time coordinate.
    pub horizon: f64,
}

impl Resolvent {
    pub fn re(&self) -> Vec<f64> {
        self.q.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.q.iter().map(|z| z.im).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.q.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

fn omega0(a: &RadialField) -> f64 {
    a.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn check_lambda(a: &RadialField, lambda: Complex64) -> Result<f64, LinearizedError> {
    let w0 = omega0(a);
    if !(lambda.re > w0) {
        return Err(LinearizedError::Spectrum { re_lambda: lambda.re, omega0: w0 });
    }
    Ok(lambda.re - w0)
}

/// Solve `-w q' + a q - lambda q = f` for `w` negative inside with simple
/// zeros at both ends.
pub fn resolvent_apply(
    w: &RadialField,
    a: &RadialField,
    lambda: Complex64,
    f: &RadialField,
) -> Result<Resolvent, LinearizedError> {
    w.same_grid(a)?;
    w.same_grid(f)?;
    let gap = check_lambda(a, lambda)?;
    let table = FStarTable::from_velocity(w, DEFAULT_DX)?;
    let scale = f.sup_norm();
    let horizon = (1e15f64).ln() / gap;
    let r = w.grid().nodes();
    let m = r.len();
    let tol = Tolerance { rtol: 1e-11, atol: 1e-16 * scale.max(1e-300), h_max: 1.0, max_steps: 1_000_000 };
    let q: Result<Vec<Complex64>, LinearizedError> = (0..m)
        .into_par_iter()
        .map(|i| {
            if i == 0 || i == m - 1 {
                return Ok(Complex64::new(f.values()[i], 0.0) / (a.values()[i] - lambda));
            }
            let y0 = table.eval(r[i]);
            // State: int a dsigma, then Re and Im of the weighted integral.
            let mut y = [0.0; 3];
            solve(
                |s, y, dy| {
                    let x = table.inverse(y0 + s);
                    dy[0] = a.eval(x);
                    let e = Complex64::from_polar((y[0] - lambda.re * s).exp(), -lambda.im * s) * f.eval(x);
                    dy[1] = e.re;
                    dy[2] = e.im;
                },
                0.0,
                horizon,
                &mut y,
                tol,
            )?;
            Ok(-Complex64::new(y[1], y[2]))
        })
        .collect();
    Ok(Resolvent { q: q?, lambda, horizon })
}

/// `max |-w q' + (a - lambda) q - f|` with `q'` from five-point stencils.
pub fn resolvent_residual(w: &RadialField, a: &RadialField, f: &RadialField, res: &Resolvent) -> f64 {
    let r = w.grid().nodes();
    let dre = lagrange_slopes(r, &res.re());
    let dim = lagrange_slopes(r, &res.im());
    (0..r.len())
        .map(|i| {
            let dq = Complex64::new(dre[i], dim[i]);
            (-w.values()[i] * dq + (a.values()[i] - res.lambda) * res.q[i] - f.values()[i]).norm()
        })
        .fold(0.0, f64::max)
}

/// One RK4 step of `X' = -w(X)`, `L' = a(X)` and, when `lambda` is given,
/// `J' = e^{L - lambda t} q0(X)`.
fn characteristic_step(
    w: &RadialField,
    a: &RadialField,
    q0: &RadialField,
    lambda: Option<Complex64>,
    t: f64,
    h: f64,
    s: &mut [f64; 4],
) {
    let rhs = |t: f64, s: &[f64; 4]| -> [f64; 4] {
        let x = s[0].clamp(0.0, 1.0);
        let mut d = [-w.eval(x), a.eval(x), 0.0, 0.0];
        if let Some(l) = lambda {
            let e = Complex64::from_polar((s[1] - l.re * t).exp(), -l.im * t) * q0.eval(x);
            d[2] = e.re;
            d[3] = e.im;
        }
        d
    };
    let add = |s: &[f64; 4], k: &[f64; 4], c: f64| -> [f64; 4] { std::array::from_fn(|j| s[j] + c * k[j]) };
    let k1 = rhs(t, s);
    let k2 = rhs(t + 0.5 * h, &add(s, &k1, 0.5 * h));
    let k3 = rhs(t + 0.5 * h, &add(s, &k2, 0.5 * h));
    let k4 = rhs(t + h, &add(s, &k3, h));
    for j in 0..4 {
        s[j] += h * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
    }
}

/// `T(t) q0 = q0(X(t)) e^{int_0^t a(X)}` at the nodes for the semigroup of
/// `q_t + w q_r = a q`, by RK4 along the backward characteristics in
/// physical coordinates.
pub fn multiplier_semigroup(w: &RadialField, a: &RadialField, q0: &RadialField, t: f64, h: f64) -> Vec<f64> {
    let steps = (t / h).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    (0..w.len())
        .into_par_iter()
        .map(|i| {
            let mut s = [w.grid().nodes()[i], 0.0, 0.0, 0.0];
            for k in 0..steps {
                characteristic_step(w, a, q0, None, k as f64 * h, h, &mut s);
            }
            q0.eval(s[0].clamp(0.0, 1.0)) * s[1].exp()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaplaceOptions {
    /// Truncation time of the Laplace integral.
    pub horizon: f64,
    pub step: f64,
    /// Largest admissible tail bound.
    pub tol: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { horizon: 20.0, step: 5e-3, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceReport {
    pub discrepancy: f64,
    pub tail_bound: f64,
    pub horizon: f64,
    pub resolvent_sup: f64,
}

/// Compare `R(lambda) q0`, the resolvent applied to `-q0`, with the
/// truncated transform `int_0^H e^{-lambda t} T(t) q0 dt`.
pub fn laplace_consistency(
    w: &RadialField,
    a: &RadialField,
    lambda: Complex64,
    q0: &RadialField,
    opts: LaplaceOptions,
) -> Result<LaplaceReport, LinearizedError> {
    let gap = check_lambda(a, lambda)?;
    let tail = q0.sup_norm() * (-gap * opts.horizon).exp() / gap;
    if tail > opts.tol {
        return Err(LinearizedError::HorizonTooShort { horizon: opts.horizon, tail, tol: opts.tol });
    }
    let minus = q0.map(Interpolation::Cubic, |_, v| -v);
    let res = resolvent_apply(w, a, lambda, &minus)?;
    let steps = (opts.horizon / opts.step).ceil().max(1.0) as usize;
    let h = opts.horizon / steps as f64;
    let transform: Vec<Complex64> = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let mut s = [w.grid().nodes()[i], 0.0, 0.0, 0.0];
            for k in 0..steps {
                characteristic_step(w, a, q0, Some(lambda), k as f64 * h, h, &mut s);
            }
            Complex64::new(s[2], s[3])
        })
        .collect();
    let discrepancy = res.q.iter().zip(&transform).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok(LaplaceReport { discrepancy, tail_bound: tail, horizon: opts.horizon, resolvent_sup: res.sup_norm() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearized::random_smooth_field;
    use crate::linearized::tests::reference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_solution() {
        let (sol, ops) = reference();
        let zero = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 0.0);
        let one = RadialField::from_fn(sol.grid(), Interpolation::Cubic, |_| 1.0);
        let lambda = Complex64::new(0.7, 0.4);
        let res = resolvent_apply(&ops.w_star, &zero, lambda, &one).unwrap();
        let expect = -1.0 / lambda;
        assert!(res.q.iter().all(|z| (z - expect).norm() <= 1e-10));
        let lap = laplace_consistency(&ops.w_star, &zero, lambda, &one, LaplaceOptions { horizon: 40.0, ..Default::default() })
            .unwrap();
        assert!(lap.discrepancy <= 1e-8, "{lap:?}");
        assert!((lap.resolvent_sup - 1.0 / lambda.norm()).abs() <= 1e-10);
    }

    #[test]
    fn residual_and_bound() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 0..3 {
            let f = random_smooth_field(sol.grid(), 5, &mut rng);
            let lambda = Complex64::new(ops.omega0 + 1.0, 0.5 * k as f64);
            let res = resolvent_apply(&ops.w_star, &ops.a, lambda, &f).unwrap();
            let resid = resolvent_residual(&ops.w_star, &ops.a, &f, &res);
            assert!(resid <= 1e-6, "{resid}");
            assert!(res.sup_norm() <= f.sup_norm() / (lambda.re - ops.omega0) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn spectrum_guard() {
        let (_, ops) = reference();
        let f = ops.a.clone();
        let err = resolvent_apply(&ops.w_star, &ops.a, Complex64::new(ops.omega0, 0.0), &f).unwrap_err();
        assert!(matches!(err, LinearizedError::Spectrum { .. }));
    }

    #[test]
    fn laplace_transform() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q0 = random_smooth_field(sol.grid(), 5, &mut rng);
        let lambda = Complex64::new(ops.omega0 + 1.0, 0.0);
        let lap = laplace_consistency(&ops.w_star, &ops.a, lambda, &q0, LaplaceOptions::default()).unwrap();
        assert!(lap.discrepancy <= 1e-4, "{lap:?}");
        let short = LaplaceOptions { horizon: 3.0, tol: 1.0, ..Default::default() };
        let long = LaplaceOptions { horizon: 6.0, ..short };
        let d1 = laplace_consistency(&ops.w_star, &ops.a, lambda, &q0, short).unwrap().discrepancy;
        let d2 = laplace_consistency(&ops.w_star, &ops.a, lambda, &q0, long).unwrap().discrepancy;
        assert!(d2 < 0.2 * d1 && d1 <= short.tol, "{d1} {d2}");
        let err = laplace_consistency(&ops.w_star, &ops.a, lambda, &q0, LaplaceOptions { horizon: 3.0, ..Default::default() });
        assert!(matches!(err, Err(LinearizedError::HorizonTooShort { .. })));
    }

    #[test]
    fn semigroup_bound() {
        let (sol, ops) = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q0 = random_smooth_field(sol.grid(), 5, &mut rng);
        for &t in &[0.5, 2.0, 8.0] {
            let q = multiplier_semigroup(&ops.w_star, &ops.a, &q0, t, 1e-2);
            let sup = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(sup <= (ops.omega0 * t).exp() * q0.sup_norm() * (1.0 + 1e-9), "{t} {sup}");
        }
    }
}
