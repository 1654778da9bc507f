//! Travel-time coordinate `F(r) = -int_{1/2}^r deta / w(eta)` of a velocity
//! `w = r(1-r) theta(r)` with `theta < 0`, tabulated in `x = logit r` where
//! `dF/dx = 1/|theta|`.

use crate::field::{hermite, hermite_deriv, RadialField};

use super::{logistic, logit, MapError};

/// Half-width of the tabulated logit range; `r` in `[1e-6, 1 - 1e-6]`.
pub const LOGIT_RANGE: f64 = 13.815510557964274;

#[derive(Debug, Clone)]
pub struct FStarTable {
    x: Vec<f64>,
    f: Vec<f64>,
    /// `dF/dx` at the table nodes.
    d: Vec<f64>,
    /// Asymptotic slopes `1/|theta(0)|` and `1/|theta(1)|`.
    pub slope_left: f64,
    pub slope_right: f64,
    theta: RadialField,
}

impl FStarTable {
    /// Table for `w = r(1-r) theta(r)`; `theta` must be negative on `[0, 1]`.
    pub fn from_theta(theta: &RadialField, dx: f64) -> Result<Self, MapError> {
        if let Some(i) = theta.values().iter().position(|&t| !(t < 0.0)) {
            return Err(MapError::SignCondition { r: theta.grid().nodes()[i], t: None });
        }
        let n = (2.0 * LOGIT_RANGE / dx).ceil() as usize;
        let h = 2.0 * LOGIT_RANGE / n as f64;
        let mut x = Vec::with_capacity(n + 1);
        let mut d = Vec::with_capacity(n + 1);
        let mut dd = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let xk = -LOGIT_RANGE + k as f64 * h;
            let r = logistic(xk);
            let th = theta.eval(r);
            if !(th < 0.0) {
                return Err(MapError::SignCondition { r, t: None });
            }
            x.push(xk);
            d.push(-1.0 / th);
            // d/dx (-1/theta) = theta' r(1-r) / theta^2.
            dd.push(theta.eval_deriv(r) * r * (1.0 - r) / (th * th));
        }
        let mut f = vec![0.0; n + 1];
        for k in 0..n {
            f[k + 1] = f[k] + 0.5 * h * (d[k] + d[k + 1]) + h * h * (dd[k] - dd[k + 1]) / 12.0;
        }
        let mid = n / 2;
        let shift = if n.is_multiple_of(2) {
            f[mid]
        } else {
            let (a, b) = (mid, mid + 1);
            hermite(x[a], x[b], f[a], f[b], d[a], d[b], 0.0)
        };
        f.iter_mut().for_each(|v| *v -= shift);
        let tv = theta.values();
        Ok(Self {
            x,
            f,
            d,
            slope_left: -1.0 / tv[0],
            slope_right: -1.0 / tv[tv.len() - 1],
            theta: theta.clone(),
        })
    }

    /// Table for a velocity field `u` with simple zeros at both ends; the
    /// quotient `u/(r(1-r))` takes the one-sided slopes at the endpoints.
    pub fn from_velocity(u: &RadialField, dx: f64) -> Result<Self, MapError> {
        let r = u.grid().nodes();
        let m = r.len();
        let du = u.derivative();
        let mut th: Vec<f64> = (0..m)
            .map(|i| if i == 0 || i == m - 1 { 0.0 } else { u.values()[i] / (r[i] * (1.0 - r[i])) })
            .collect();
        th[0] = du[0];
        th[m - 1] = -du[m - 1];
        let theta = RadialField::new(u.grid().clone(), th, crate::field::Interpolation::Cubic)?;
        Self::from_theta(&theta, dx)
    }

    pub fn theta(&self) -> &RadialField {
        &self.theta
    }

    /// `F` at logit coordinate `x`.
    pub fn f_of_logit(&self, xq: f64) -> f64 {
        let n = self.x.len() - 1;
        if xq <= self.x[0] {
            return self.f[0] + (xq - self.x[0]) * self.slope_left;
        }
        if xq >= self.x[n] {
            return self.f[n] + (xq - self.x[n]) * self.slope_right;
        }
        let k = self.cell(xq);
        hermite(self.x[k], self.x[k + 1], self.f[k], self.f[k + 1], self.d[k], self.d[k + 1], xq)
    }

    fn cell(&self, xq: f64) -> usize {
        let h = self.x[1] - self.x[0];
        (((xq - self.x[0]) / h).floor() as usize).min(self.x.len() - 2)
    }

    /// `F(r)`; infinite at the endpoints.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if r >= 1.0 {
            return f64::INFINITY;
        }
        self.f_of_logit(logit(r))
    }

    /// Logit coordinate of `F^{-1}(v)`.
    pub fn inverse_logit(&self, v: f64) -> f64 {
        let n = self.x.len() - 1;
        if v <= self.f[0] {
            return self.x[0] + (v - self.f[0]) / self.slope_left;
        }
        if v >= self.f[n] {
            return self.x[n] + (v - self.f[n]) / self.slope_right;
        }
        let k = self.f.partition_point(|&fv| fv <= v).saturating_sub(1).min(n - 1);
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let (f0, f1, d0, d1) = (self.f[k], self.f[k + 1], self.d[k], self.d[k + 1]);
        let mut xq = x0 + (v - f0) / (f1 - f0) * (x1 - x0);
        for _ in 0..8 {
            let g = hermite(x0, x1, f0, f1, d0, d1, xq) - v;
            let dg = hermite_deriv(x0, x1, f0, f1, d0, d1, xq);
            let step = g / dg;
            xq = (xq - step).clamp(x0, x1);
            if step.abs() < 1e-15 * (1.0 + xq.abs()) {
                break;
            }
        }
        xq
    }

    /// `F^{-1}(v)`, with `F^{-1}(-inf) = 0` and `F^{-1}(inf) = 1`.
    pub fn inverse(&self, v: f64) -> f64 {
        if v == f64::NEG_INFINITY {
            return 0.0;
        }
        if v == f64::INFINITY {
            return 1.0;
        }
        logistic(self.inverse_logit(v))
    }

    /// `1 - F^{-1}(v)` without cancellation.
    pub fn inverse_complement(&self, v: f64) -> f64 {
        if v == f64::NEG_INFINITY {
            return 1.0;
        }
        if v == f64::INFINITY {
            return 0.0;
        }
        logistic(-self.inverse_logit(v))
    }

    /// Stationary flow `Phi_*(xi, t, s) = F^{-1}(F(xi) - t + s)`.
    pub fn phi_star(&self, xi: f64, t: f64, s: f64) -> f64 {
        if xi <= 0.0 || xi >= 1.0 || t == s {
            return xi;
        }
        self.inverse(self.eval(xi) - (t - s))
    }

    /// Inverse flow `Psi_*(r, t, s) = F^{-1}(F(r) + t - s)`.
    pub fn psi_star(&self, r: f64, t: f64, s: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 || t == s {
            return r;
        }
        self.inverse(self.eval(r) + (t - s))
    }

    /// Table size.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Table points per unit of `F` in the coarsest cell.
    pub fn min_points_per_unit(&self) -> f64 {
        let h = self.x[1] - self.x[0];
        let dmax = self.d.iter().cloned().fold(0.0, f64::max);
        1.0 / (h * dmax)
    }
}

/// Default logit spacing, at least 40 points per unit of `F` for `|theta|`
/// down to 0.01.
pub const DEFAULT_DX: f64 = 0.0025;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Interpolation, RadialGrid};

    fn logistic_table() -> FStarTable {
        let g = RadialGrid::uniform(201).unwrap();
        let u = RadialField::from_fn(&g, Interpolation::Cubic, |r| -r * (1.0 - r));
        FStarTable::from_velocity(&u, DEFAULT_DX).unwrap()
    }

    #[test]
    fn logistic_coordinate() {
        let t = logistic_table();
        assert_eq!(t.eval(0.5), 0.0);
        for &r in &[1e-9f64, 1e-5, 0.01, 0.3, 0.7, 0.999, 1.0 - 1e-8] {
            let exact = (r / (1.0 - r)).ln();
            assert!((t.eval(r) - exact).abs() <= 1e-8, "{r}");
        }
    }

    #[test]
    fn logistic_flow() {
        let t = logistic_table();
        for &xi in &[0.01, 0.4, 0.9] {
            for &dt in &[0.0, 0.5, 3.0] {
                let exact = 1.0 / (1.0 + ((1.0 - xi) / xi) * f64::exp(dt));
                assert!((t.phi_star(xi, dt, 0.0) - exact).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn round_trip() {
        let g = RadialGrid::uniform(101).unwrap();
        let theta = RadialField::from_fn(&g, Interpolation::Cubic, |r| -0.1 - 0.9 * r * r);
        let t = FStarTable::from_theta(&theta, DEFAULT_DX).unwrap();
        assert!(t.min_points_per_unit() >= 40.0);
        for k in 0..=1000 {
            let r = 1e-4 + (1.0 - 2e-4) * k as f64 / 1000.0;
            assert!((t.inverse(t.eval(r)) - r).abs() <= 1e-9);
        }
        assert!(t.eval(1e-300) < -30.0 && t.eval(1.0 - 1e-15) > 30.0);
    }

    #[test]
    fn interior_zero_is_rejected() {
        let g = RadialGrid::uniform(101).unwrap();
        let theta = RadialField::from_fn(&g, Interpolation::Cubic, |r| r - 0.5);
        assert!(FStarTable::from_theta(&theta, DEFAULT_DX).is_err());
    }
}
