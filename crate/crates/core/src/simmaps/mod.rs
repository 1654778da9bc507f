//! Similarity maps between the characteristic flow of a velocity path
//! `w(r, t)` and the stationary flow of `u_*`, computed in the travel-time
//! coordinate `F_*`, and measured versions of their distortion bounds.

mod bounds;
mod fstar;

use thiserror::Error;

use crate::field::{GridError, RadialField};
use crate::ode::{integrate, OdeError, Tolerance};
use crate::transport::picard::FrozenVelocity;

pub use bounds::{check_map_bounds, BoundEntry, BoundKind, BoundsReport, SamplePlan};
pub use fstar::{FStarTable, DEFAULT_DX, LOGIT_RANGE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("velocity is not strictly negative at r = {r} (t = {t:?})")]
    SignCondition { r: f64, t: Option<f64> },
    #[error("maps need t >= s, got t = {t}, s = {s}")]
    TimeOrder { t: f64, s: f64 },
    #[error("bound `{id}` violated at r = {r}, t = {t}, s = {s}")]
    Violated { id: String, r: f64, t: f64, s: f64 },
    #[error("invalid sample plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

pub(crate) fn logit(r: f64) -> f64 {
    r.ln() - (-r).ln_1p()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A velocity path `w(r, t) = r(1-r) theta(r, t)`.
pub trait VelocityPath: Sync {
    fn theta(&self, r: f64, t: f64) -> f64;
    /// `dw/dr`.
    fn w_r(&self, r: f64, t: f64) -> f64;
    fn w(&self, r: f64, t: f64) -> f64 {
        r * (1.0 - r) * self.theta(r, t)
    }
}

/// `d/dr [r(1-r) theta(r)]`.
pub fn weighted_derivative(theta: &RadialField, r: f64) -> f64 {
    (1.0 - 2.0 * r) * theta.eval(r) + r * (1.0 - r) * theta.eval_deriv(r)
}

/// The stationary velocity itself.
#[derive(Debug, Clone)]
pub struct StationaryPath {
    pub theta: RadialField,
}

impl VelocityPath for StationaryPath {
    fn theta(&self, r: f64, _t: f64) -> f64 {
        self.theta.eval(r)
    }

    fn w_r(&self, r: f64, _t: f64) -> f64 {
        weighted_derivative(&self.theta, r)
    }
}

/// `w = u_*(r) [1 + eps e^{-mu t} cos(k pi r)]`.
#[derive(Debug, Clone)]
pub struct ScaledFlow {
    pub theta_star: RadialField,
    pub eps: f64,
    pub mu: f64,
    pub wavenumber: f64,
}

impl ScaledFlow {
    pub fn new(theta_star: RadialField, eps: f64, mu: f64, wavenumber: f64) -> Self {
        Self { theta_star, eps, mu, wavenumber }
    }

    pub fn with_epsilon(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    fn modulation(&self, r: f64, t: f64) -> (f64, f64) {
        let amp = self.eps * (-self.mu * t).exp();
        let k = self.wavenumber * std::f64::consts::PI;
        (amp * (k * r).cos(), -amp * k * (k * r).sin())
    }
}

impl VelocityPath for ScaledFlow {
    fn theta(&self, r: f64, t: f64) -> f64 {
        self.theta_star.eval(r) * (1.0 + self.modulation(r, t).0)
    }

    fn w_r(&self, r: f64, t: f64) -> f64 {
        let (m, dm) = self.modulation(r, t);
        let u = r * (1.0 - r) * self.theta_star.eval(r);
        weighted_derivative(&self.theta_star, r) * (1.0 + m) + u * dm
    }
}

impl VelocityPath for FrozenVelocity {
    fn theta(&self, r: f64, t: f64) -> f64 {
        self.theta_at(r, t).0
    }

    fn w_r(&self, r: f64, t: f64) -> f64 {
        let (th, dth) = self.theta_at(r, t);
        (1.0 - 2.0 * r) * th + r * (1.0 - r) * dth
    }
}

/// One forward characteristic from `xi` at time `s` to time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardFlow {
    /// `Phi(xi, t, s)`.
    pub phi: f64,
    /// `Phi_*(xi, t, s)` integrated alongside.
    pub phi_star: f64,
    /// `int_s^t g(xi, tau, s) dtau`.
    pub g_integral: f64,
    /// `int_s^t [w_r(Phi) - u_*'(Phi_*)] dtau`.
    pub log_jacobian: f64,
}

/// Evaluators for `Phi_*`, `Psi_*`, `Phi`, `Psi`, `T` and `S`.
#[derive(Debug, Clone)]
pub struct DiffeoMaps<P> {
    table: FStarTable,
    path: P,
    tol: Tolerance,
}

fn check_times(t: f64, s: f64) -> Result<(), MapError> {
    if t >= s {
        Ok(())
    } else {
        Err(MapError::TimeOrder { t, s })
    }
}

fn endpoint(r: f64) -> Option<f64> {
    if r <= 0.0 {
        Some(0.0)
    } else if r >= 1.0 {
        Some(1.0)
    } else {
        None
    }
}

impl<P: VelocityPath> DiffeoMaps<P> {
    pub fn new(table: FStarTable, path: P) -> Self {
        let tol = Tolerance { rtol: 1e-12, atol: 1e-14, h_max: f64::INFINITY, max_steps: 1_000_000 };
        Self { table, path, tol }
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn table(&self) -> &FStarTable {
        &self.table
    }

    pub fn path(&self) -> &P {
        &self.path
    }

    /// `G(r, t) = w/u_* - 1`.
    pub fn g(&self, r: f64, t: f64) -> f64 {
        self.path.theta(r, t) / self.table.theta().eval(r) - 1.0
    }

    /// Integrate the perturbed and stationary characteristics from `xi`
    /// together in logit coordinates.
    pub fn forward(&self, xi: f64, t: f64, s: f64) -> Result<ForwardFlow, MapError> {
        check_times(t, s)?;
        if t == s {
            return Ok(ForwardFlow { phi: xi, phi_star: xi, g_integral: 0.0, log_jacobian: 0.0 });
        }
        let theta_s = self.table.theta();
        let pinned = endpoint(xi);
        let x0 = if pinned.is_some() { 0.0 } else { logit(xi) };
        let mut y = [x0, x0, 0.0, 0.0];
        let mut bad = None;
        let rhs = |tau: f64, y: &[f64], dy: &mut [f64]| {
            let (r, rs) = match pinned {
                Some(e) => (e, e),
                None => (logistic(y[0]), logistic(y[1])),
            };
            let tw = self.path.theta(r, tau);
            if !(tw < 0.0) && bad.is_none() {
                bad = Some((r, tau));
            }
            let moving = pinned.is_none() as u8 as f64;
            dy[0] = moving * tw;
            dy[1] = moving * theta_s.eval(rs);
            dy[2] = tw / theta_s.eval(r) - 1.0;
            dy[3] = self.path.w_r(r, tau) - weighted_derivative(theta_s, rs);
        };
        integrate(rhs, s, t, &mut y, self.tol, |_, _, _| true)?;
        if let Some((r, tau)) = bad {
            return Err(MapError::SignCondition { r, t: Some(tau) });
        }
        let (phi, phi_star) = match pinned {
            Some(e) => (e, e),
            None => (logistic(y[0]), logistic(y[1])),
        };
        Ok(ForwardFlow { phi, phi_star, g_integral: y[2], log_jacobian: y[3] })
    }

    /// `Psi(r, t, s)` by integrating the characteristic through `(r, t)`
    /// back to time `s`, with `int_s^t G` along it.
    pub fn backward(&self, r: f64, t: f64, s: f64) -> Result<(f64, f64), MapError> {
        check_times(t, s)?;
        if t == s {
            return Ok((r, 0.0));
        }
        if let Some(e) = endpoint(r) {
            let mut y = [0.0];
            integrate(|tau, _, dy| dy[0] = self.g(e, tau), t, s, &mut y, self.tol, |_, _, _| true)?;
            return Ok((e, -y[0]));
        }
        let theta_s = self.table.theta();
        let mut y = [logit(r), 0.0];
        let mut bad = None;
        let rhs = |tau: f64, y: &[f64], dy: &mut [f64]| {
            let x = logistic(y[0]);
            let tw = self.path.theta(x, tau);
            if !(tw < 0.0) && bad.is_none() {
                bad = Some((x, tau));
            }
            dy[0] = tw;
            dy[1] = tw / theta_s.eval(x) - 1.0;
        };
        integrate(rhs, t, s, &mut y, self.tol, |_, _, _| true)?;
        if let Some((x, tau)) = bad {
            return Err(MapError::SignCondition { r: x, t: Some(tau) });
        }
        Ok((logistic(y[0]), -y[1]))
    }

    pub fn phi(&self, xi: f64, t: f64, s: f64) -> Result<f64, MapError> {
        Ok(self.forward(xi, t, s)?.phi)
    }

    pub fn psi(&self, r: f64, t: f64, s: f64) -> Result<f64, MapError> {
        Ok(self.backward(r, t, s)?.0)
    }

    pub fn phi_star(&self, xi: f64, t: f64, s: f64) -> f64 {
        self.table.phi_star(xi, t, s)
    }

    pub fn psi_star(&self, r: f64, t: f64, s: f64) -> f64 {
        self.table.psi_star(r, t, s)
    }

    /// `T = Phi_* o Psi`.
    pub fn map_t(&self, r: f64, t: f64, s: f64) -> Result<f64, MapError> {
        Ok(self.table.phi_star(self.psi(r, t, s)?, t, s))
    }

    /// `T = F_*^{-1}(F_*(r) + int_s^t g(Psi(r,t,s), tau, s) dtau)`.
    pub fn map_t_integral(&self, r: f64, t: f64, s: f64) -> Result<f64, MapError> {
        if endpoint(r).is_some() {
            return Ok(r);
        }
        let xi = self.psi(r, t, s)?;
        let a = self.forward(xi, t, s)?.g_integral;
        Ok(self.table.inverse(self.table.eval(r) + a))
    }

    /// `S = Phi o Psi_*`.
    pub fn map_s(&self, rbar: f64, t: f64, s: f64) -> Result<f64, MapError> {
        self.phi(self.table.psi_star(rbar, t, s), t, s)
    }

    /// `S = F_*^{-1}(F_*(rbar) - int_s^t g(Psi_*(rbar,t,s), tau, s) dtau)`.
    pub fn map_s_integral(&self, rbar: f64, t: f64, s: f64) -> Result<f64, MapError> {
        if endpoint(rbar).is_some() {
            return Ok(rbar);
        }
        let a = self.forward(self.table.psi_star(rbar, t, s), t, s)?.g_integral;
        Ok(self.table.inverse(self.table.eval(rbar) - a))
    }

    /// `dT/dr = exp int_s^t [u_*'(Phi_*(xi)) - w_r(Phi(xi))] dtau` at
    /// `xi = Psi(r, t, s)`.
    pub fn dt_dr(&self, r: f64, t: f64, s: f64) -> Result<f64, MapError> {
        let xi = self.psi(r, t, s)?;
        Ok((-self.forward(xi, t, s)?.log_jacobian).exp())
    }

    /// `dS/drbar`, the same integral with the opposite sign at
    /// `xi = Psi_*(rbar, t, s)`.
    pub fn ds_dr(&self, rbar: f64, t: f64, s: f64) -> Result<f64, MapError> {
        Ok(self.forward(self.table.psi_star(rbar, t, s), t, s)?.log_jacobian.exp())
    }

    /// Centered-difference residual of `T_t + w T_r = u_*(T)` at `(r, t)`;
    /// needs `t - h >= s` and `h < r < 1 - h`.
    pub fn t_equation_residual(&self, r: f64, t: f64, s: f64, h: f64) -> Result<f64, MapError> {
        let tt = (self.map_t(r, t + h, s)? - self.map_t(r, t - h, s)?) / (2.0 * h);
        let tr = (self.map_t(r + h, t, s)? - self.map_t(r - h, t, s)?) / (2.0 * h);
        let tv = self.map_t(r, t, s)?;
        let u = tv * (1.0 - tv) * self.table.theta().eval(tv);
        Ok(tt + self.path.w(r, t) * tr - u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Interpolation, RadialGrid};

    fn theta() -> RadialField {
        let g = RadialGrid::uniform(201).unwrap();
        RadialField::from_fn(&g, Interpolation::Cubic, |r| -0.4 - 0.6 * r * r)
    }

    fn maps(eps: f64) -> DiffeoMaps<ScaledFlow> {
        let th = theta();
        let table = FStarTable::from_theta(&th, DEFAULT_DX).unwrap();
        DiffeoMaps::new(table, ScaledFlow::new(th, eps, 0.5, 1.0))
    }

    #[test]
    fn stationary_path_reproduces_stationary_flow() {
        let m = maps(0.0);
        for &xi in &[1e-4, 0.2, 0.5, 0.93] {
            let f = m.forward(xi, 3.0, 1.0).unwrap();
            assert!((f.phi - m.phi_star(xi, 3.0, 1.0)).abs() <= 1e-8);
            assert_eq!(f.g_integral, 0.0);
            assert_eq!(f.log_jacobian, 0.0);
        }
    }

    #[test]
    fn identity_and_inverse_pairs() {
        let m = maps(1e-2);
        for &r in &[0.0, 1e-3, 0.3, 0.77, 1.0] {
            assert_eq!(m.phi(r, 2.0, 2.0).unwrap(), r);
            assert_eq!(m.psi(r, 2.0, 2.0).unwrap(), r);
            assert!((m.map_t(r, 2.0, 2.0).unwrap() - r).abs() <= 1e-12);
            let xi = m.psi(r, 4.0, 0.5).unwrap();
            assert!((m.phi(xi, 4.0, 0.5).unwrap() - r).abs() <= 1e-8);
            let rb = m.map_t(r, 4.0, 0.5).unwrap();
            assert!((m.map_s(rb, 4.0, 0.5).unwrap() - r).abs() <= 1e-8);
        }
    }

    #[test]
    fn cocycle() {
        let m = maps(1e-2);
        let (r, t, s) = (0.35, 5.0, 1.0);
        let xi = m.psi(r, t, s).unwrap();
        for &tau in &[1.0, 2.5, 4.0, 5.0] {
            let lhs = m.phi(xi, tau, s).unwrap();
            let rhs = m.psi(r, t, tau).unwrap();
            assert!((lhs - rhs).abs() <= 1e-7, "{tau}");
        }
    }

    #[test]
    fn integral_forms_match_compositions() {
        let m = maps(1e-2);
        for &r in &[1e-3, 0.1, 0.5, 0.9, 0.999] {
            let a = m.map_t(r, 3.0, 0.2).unwrap();
            let b = m.map_t_integral(r, 3.0, 0.2).unwrap();
            assert!((a - b).abs() <= 1e-7);
            let a = m.map_s(r, 3.0, 0.2).unwrap();
            let b = m.map_s_integral(r, 3.0, 0.2).unwrap();
            assert!((a - b).abs() <= 1e-7);
            // Integral representation of Phi.
            let f = m.forward(r, 3.0, 0.2).unwrap();
            let lhs = m.table().eval(f.phi) - m.table().eval(r);
            assert!((lhs + 2.8 + f.g_integral).abs() <= 1e-6);
        }
    }

    #[test]
    fn jacobians_match_differences() {
        let m = maps(2e-2);
        let (t, s, h) = (3.0, 0.0, 1e-5);
        for &r in &[0.05, 0.4, 0.8] {
            let fd = (m.map_t(r + h, t, s).unwrap() - m.map_t(r - h, t, s).unwrap()) / (2.0 * h);
            assert!((m.dt_dr(r, t, s).unwrap() - fd).abs() <= 1e-6);
            let fd = (m.map_s(r + h, t, s).unwrap() - m.map_s(r - h, t, s).unwrap()) / (2.0 * h);
            assert!((m.ds_dr(r, t, s).unwrap() - fd).abs() <= 1e-6);
        }
    }

    #[test]
    fn t_solves_its_transport_equation() {
        let m = maps(1e-2);
        for &r in &[0.2, 0.5, 0.85] {
            assert!(m.t_equation_residual(r, 2.0, 0.5, 1e-4).unwrap().abs() <= 1e-4);
        }
    }

    #[test]
    fn sign_violation_is_detected() {
        let m = maps(2.0);
        assert!(matches!(m.forward(0.95, 1.0, 0.0), Err(MapError::SignCondition { .. })));
        assert!(matches!(m.psi(0.5, 1.0, 2.0), Err(MapError::TimeOrder { .. })));
    }
}
