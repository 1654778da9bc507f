//! Radial nutrient problem `c'' + (2/r) c' = e^{2z} F(c)`, `c'(0) = 0`,
//! `c(1) = 1`, and its z-sensitivity.
//!
//! On uniform grids the equation is rewritten for `v = r c`, which turns it
//! into `v'' = e^{2z} r F(v/r)` with `v(0) = 0`, `v(1) = 1`, and solved with
//! the fourth-order Numerov scheme. Other grids use a conservative
//! second-order finite-volume scheme.

use thiserror::Error;

use crate::field::{GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::KineticsSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NutrientError {
    #[error("nutrient iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("log-radius {0} is not finite")]
    BadRadius(f64),
    #[error("singular linear system in the sensitivity solve")]
    Singular,
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub const MAX_NEWTON: usize = 50;

#[derive(Debug, Clone)]
pub struct NutrientSolution {
    pub z: f64,
    /// Nutrient level, interpolated with its exact slope.
    pub c: RadialField,
    pub c_prime: RadialField,
    pub c_z: Option<RadialField>,
    /// Max residual of the discrete equations, in units of the ODE.
    pub residual: f64,
    pub iterations: usize,
}

impl NutrientSolution {
    pub fn grid(&self) -> &RadialGrid {
        self.c.grid()
    }
}

pub fn solve_nutrient(spec: &KineticsSpec, z: f64, grid: &RadialGrid) -> Result<NutrientSolution, NutrientError> {
    solve_nutrient_from(spec, z, grid, None)
}

/// Solve with an optional initial guess for the nodal values of `c`.
pub fn solve_nutrient_from(
    spec: &KineticsSpec,
    z: f64,
    grid: &RadialGrid,
    guess: Option<&[f64]>,
) -> Result<NutrientSolution, NutrientError> {
    if !z.is_finite() {
        return Err(NutrientError::BadRadius(z));
    }
    if let Some(g) = guess {
        if g.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: g.len() }.into());
        }
    }
    if grid.is_uniform() {
        numerov(spec, z, grid, guess)
    } else {
        finite_volume(spec, z, grid, guess)
    }
}

/// Solve `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place (`d` becomes x).
pub(crate) fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) -> Result<(), NutrientError> {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut beta = b[0];
    if beta == 0.0 {
        return Err(NutrientError::Singular);
    }
    d[0] /= beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(NutrientError::Singular);
        }
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `c(0)` from the even expansion through the first three interior nodes.
fn even_extrapolate(c1: f64, c2: f64, c3: f64) -> f64 {
    (15.0 * c1 - 6.0 * c2 + c3) / 10.0
}

fn numerov(
    spec: &KineticsSpec,
    z: f64,
    grid: &RadialGrid,
    guess: Option<&[f64]>,
) -> Result<NutrientSolution, NutrientError> {
    let r = grid.nodes();
    let m = r.len();
    let h = grid.spacing();
    let h2 = h * h / 12.0;
    let e = (2.0 * z).exp();
    let mut v: Vec<f64> = match guess {
        Some(g) => r.iter().zip(g).map(|(ri, ci)| ri * ci).collect(),
        None => r.to_vec(),
    };
    v[0] = 0.0;
    v[m - 1] = 1.0;

    let source = |v: &[f64], s: &mut [f64], ds: &mut [f64]| {
        s[0] = 0.0;
        ds[0] = 0.0;
        for i in 1..m {
            let (f, fd) = spec.consumption(v[i] / r[i]);
            s[i] = e * r[i] * f;
            ds[i] = e * fd;
        }
    };
    let residual = |v: &[f64], s: &[f64], out: &mut [f64]| {
        for i in 1..m - 1 {
            out[i - 1] = v[i + 1] - 2.0 * v[i] + v[i - 1] - h2 * (s[i + 1] + 10.0 * s[i] + s[i - 1]);
        }
    };

    let n = m - 2;
    let mut s = vec![0.0; m];
    let mut ds = vec![0.0; m];
    let mut res = vec![0.0; n];
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut trial = v.clone();
    let mut ts = vec![0.0; m];
    let mut tds = vec![0.0; m];
    let mut tres = vec![0.0; n];

    source(&v, &mut s, &mut ds);
    residual(&v, &s, &mut res);
    let mut rnorm = max_abs(&res);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_NEWTON {
        iterations += 1;
        for k in 0..n {
            let i = k + 1;
            a[k] = 1.0 - h2 * ds[i - 1];
            b[k] = -2.0 - 10.0 * h2 * ds[i];
            c[k] = 1.0 - h2 * ds[i + 1];
        }
        let mut delta: Vec<f64> = res.iter().map(|x| -x).collect();
        thomas(&a, &b, &c, &mut delta)?;
        let step = max_abs(&delta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for k in 0..n {
                trial[k + 1] = v[k + 1] + alpha * delta[k];
            }
            source(&trial, &mut ts, &mut tds);
            residual(&trial, &ts, &mut tres);
            let tn = max_abs(&tres);
            if tn.is_finite() && (tn < rnorm || tn <= 1e-15 * h * h) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent possible: the residual has hit round-off level.
            converged = rnorm <= 1e-13;
            break;
        }
        std::mem::swap(&mut v, &mut trial);
        std::mem::swap(&mut s, &mut ts);
        std::mem::swap(&mut ds, &mut tds);
        std::mem::swap(&mut res, &mut tres);
        rnorm = max_abs(&res);
        if alpha == 1.0 && step <= 1e-14 {
            converged = true;
            break;
        }
    }
    let resid = rnorm / (h * h);
    if !converged || resid > 1e-8 {
        return Err(NutrientError::NonConvergence { iterations, residual: resid });
    }

    let mut cv = vec![0.0; m];
    for i in 1..m {
        cv[i] = v[i] / r[i];
    }
    cv[m - 1] = 1.0;
    cv[0] = even_extrapolate(cv[1], cv[2], cv[3]);

    // v' to fourth order from the Numerov relations.
    let mut cp = vec![0.0; m];
    for i in 1..m - 1 {
        let vp = (v[i + 1] - v[i - 1]) / (2.0 * h) - h * (s[i + 1] - s[i - 1]) / 12.0;
        cp[i] = (vp - cv[i]) / r[i];
    }
    let vp1 = (v[m - 1] - v[m - 2]) / h + h * (7.0 * s[m - 1] + 6.0 * s[m - 2] - s[m - 3]) / 24.0;
    cp[m - 1] = vp1 - 1.0;
    cp[0] = 0.0;

    let c_field = RadialField::with_slopes(grid.clone(), cv, cp.clone())?;
    let c_prime = RadialField::new(grid.clone(), cp, Interpolation::Cubic)?;
    Ok(NutrientSolution { z, c: c_field, c_prime, c_z: None, residual: resid, iterations })
}

/// Control-volume bounds and volumes for a general grid.
fn volumes(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = r.len();
    let mut half = vec![0.0; m + 1];
    for i in 1..m {
        half[i] = 0.5 * (r[i - 1] + r[i]);
    }
    half[m] = 1.0;
    let vol = (0..m).map(|i| (half[i + 1].powi(3) - half[i].powi(3)) / 3.0).collect();
    (half, vol)
}

fn finite_volume(
    spec: &KineticsSpec,
    z: f64,
    grid: &RadialGrid,
    guess: Option<&[f64]>,
) -> Result<NutrientSolution, NutrientError> {
    let r = grid.nodes();
    let m = r.len();
    let e = (2.0 * z).exp();
    let (half, vol) = volumes(r);
    let flux: Vec<f64> = (0..m - 1).map(|i| half[i + 1] * half[i + 1] / (r[i + 1] - r[i])).collect();
    let mut cv: Vec<f64> = guess.map(|g| g.to_vec()).unwrap_or_else(|| vec![1.0; m]);
    cv[m - 1] = 1.0;
    let n = m - 1;
    let eval = |cv: &[f64], res: &mut [f64]| {
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { flux[i - 1] * (cv[i] - cv[i - 1]) };
            let right = flux[i] * (cv[i + 1] - cv[i]);
            res[i] = (right - left) / vol[i] - e * spec.consumption(cv[i]).0;
        }
    };
    let mut res = vec![0.0; n];
    eval(&cv, &mut res);
    let mut rnorm = max_abs(&res);
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut trial = cv.clone();
    let mut tres = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = rnorm <= 1e-13;
    while !converged && iterations < MAX_NEWTON {
        iterations += 1;
        for i in 0..n {
            let fl = if i == 0 { 0.0 } else { flux[i - 1] };
            a[i] = fl / vol[i];
            c[i] = flux[i] / vol[i];
            b[i] = -(fl + flux[i]) / vol[i] - e * spec.consumption(cv[i]).1;
        }
        let mut delta: Vec<f64> = res.iter().map(|x| -x).collect();
        thomas(&a, &b, &c, &mut delta)?;
        let step = max_abs(&delta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..n {
                trial[i] = cv[i] + alpha * delta[i];
            }
            eval(&trial, &mut tres);
            let tn = max_abs(&tres);
            if tn.is_finite() && (tn < rnorm || tn <= 1e-14) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            converged = rnorm <= 1e-8;
            break;
        }
        std::mem::swap(&mut cv, &mut trial);
        std::mem::swap(&mut res, &mut tres);
        rnorm = max_abs(&res);
        if step <= 1e-14 {
            converged = true;
        }
    }
    if !converged || rnorm > 1e-8 {
        return Err(NutrientError::NonConvergence { iterations, residual: rnorm });
    }
    let c_field = RadialField::new(grid.clone(), cv, Interpolation::Cubic)?;
    let mut cp = c_field.derivative();
    cp[0] = 0.0;
    let c_field = RadialField::with_slopes(grid.clone(), c_field.values().to_vec(), cp.clone())?;
    let c_prime = RadialField::new(grid.clone(), cp, Interpolation::Cubic)?;
    Ok(NutrientSolution { z, c: c_field, c_prime, c_z: None, residual: rnorm, iterations })
}

/// Solve `c_z'' + (2/r) c_z' = e^{2z}[F'(c) c_z + 2 F(c)]`, `c_z'(0) = 0`,
/// `c_z(1) = 0`.
pub fn solve_sensitivity(spec: &KineticsSpec, sol: &NutrientSolution) -> Result<RadialField, NutrientError> {
    let grid = sol.grid();
    let r = grid.nodes();
    let m = r.len();
    let e = (2.0 * sol.z).exp();
    let cv = sol.c.values();
    let (q, sigma): (Vec<f64>, Vec<f64>) = cv
        .iter()
        .map(|&c| {
            let (f, fd) = spec.consumption(c);
            (e * fd, 2.0 * e * f)
        })
        .unzip();
    let mut out = vec![0.0; m];
    if grid.is_uniform() {
        let h = grid.spacing();
        let h2 = h * h / 12.0;
        let n = m - 2;
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut d = vec![0.0; n];
        for k in 0..n {
            let i = k + 1;
            a[k] = 1.0 - h2 * q[i - 1];
            b[k] = -2.0 - 10.0 * h2 * q[i];
            c[k] = 1.0 - h2 * q[i + 1];
            d[k] = h2 * (r[i + 1] * sigma[i + 1] + 10.0 * r[i] * sigma[i] + r[i - 1] * sigma[i - 1]);
        }
        thomas(&a, &b, &c, &mut d)?;
        for k in 0..n {
            out[k + 1] = d[k] / r[k + 1];
        }
        out[0] = even_extrapolate(out[1], out[2], out[3]);
    } else {
        let (half, vol) = volumes(r);
        let flux: Vec<f64> = (0..m - 1).map(|i| half[i + 1] * half[i + 1] / (r[i + 1] - r[i])).collect();
        let n = m - 1;
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut d = vec![0.0; n];
        for i in 0..n {
            let fl = if i == 0 { 0.0 } else { flux[i - 1] };
            a[i] = fl / vol[i];
            c[i] = flux[i] / vol[i];
            b[i] = -(fl + flux[i]) / vol[i] - q[i];
            d[i] = sigma[i];
        }
        thomas(&a, &b, &c, &mut d)?;
        out[..n].copy_from_slice(&d);
    }
    out[m - 1] = 0.0;
    Ok(RadialField::new(grid.clone(), out, Interpolation::Cubic)?)
}

/// Nutrient solver that keeps the last solution as a warm start.
#[derive(Debug, Clone)]
pub struct NutrientCache {
    spec: KineticsSpec,
    grid: RadialGrid,
    last: Option<NutrientSolution>,
}

impl NutrientCache {
    pub fn new(spec: &KineticsSpec, grid: &RadialGrid) -> Self {
        Self { spec: spec.clone(), grid: grid.clone(), last: None }
    }

    pub fn solve(&mut self, z: f64) -> Result<&NutrientSolution, NutrientError> {
        let reuse = matches!(&self.last, Some(s) if s.z == z);
        if !reuse {
            let guess = self.last.as_ref().map(|s| s.c.values().to_vec());
            let sol = solve_nutrient_from(&self.spec, z, &self.grid, guess.as_deref())?;
            self.last = Some(sol);
        }
        Ok(self.last.as_ref().expect("solution stored above"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::ConsumptionLaw;

    fn sinh_profile(k: f64, r: f64) -> f64 {
        if r == 0.0 {
            k / k.sinh()
        } else {
            (k * r).sinh() / (r * k.sinh())
        }
    }

    #[test]
    fn tiny_tumor_is_saturated() {
        let g = RadialGrid::uniform(201).unwrap();
        let sol = solve_nutrient(&KineticsSpec::default(), -30.0, &g).unwrap();
        assert!(sol.c.values().iter().all(|c| (c - 1.0).abs() < 1e-10));
        let cz = solve_sensitivity(&KineticsSpec::default(), &sol).unwrap();
        assert!(cz.sup_norm() < 1e-9);
    }

    #[test]
    fn matches_closed_form() {
        let g = RadialGrid::uniform(801).unwrap();
        let spec = KineticsSpec::affine(1.0, 1.0, 0.5, 0.4, 0.3);
        let sol = solve_nutrient(&spec, 0.0, &g).unwrap();
        let k = 1.0f64;
        let err = g
            .nodes()
            .iter()
            .zip(sol.c.values())
            .map(|(&r, &c)| (c - sinh_profile(k, r)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
        assert_eq!(sol.c.values()[800], 1.0);
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn slope_is_accurate() {
        let g = RadialGrid::uniform(401).unwrap();
        let spec = KineticsSpec::affine(4.0, 1.0, 0.5, 0.4, 0.3);
        let sol = solve_nutrient(&spec, 0.0, &g).unwrap();
        let k = 2.0f64;
        for (&r, &cp) in g.nodes().iter().zip(sol.c_prime.values()).skip(1) {
            let exact = (k * r * (k * r).cosh() - (k * r).sinh()) / (r * r * k.sinh());
            assert!((cp - exact).abs() < 1e-7, "r={r}: {cp} vs {exact}");
        }
    }

    #[test]
    fn saturating_law_converges_under_refinement() {
        let spec = KineticsSpec::affine(3.0, 1.0, 0.5, 0.4, 0.3).with_consumption(ConsumptionLaw::Saturating);
        let coarse = solve_nutrient(&spec, 0.0, &RadialGrid::uniform(201).unwrap()).unwrap();
        let fine = solve_nutrient(&spec, 0.0, &RadialGrid::uniform(2001).unwrap()).unwrap();
        for (k, &r) in coarse.grid().nodes().iter().enumerate() {
            assert!((coarse.c.values()[k] - fine.c.eval(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn nonuniform_grid_is_second_order() {
        let spec = KineticsSpec::affine(1.0, 1.0, 0.5, 0.4, 0.3);
        let err = |m: usize| {
            let nodes: Vec<f64> = (0..m).map(|i| (i as f64 / (m - 1) as f64).powf(1.5)).collect();
            let g = RadialGrid::from_nodes(nodes).unwrap();
            let sol = solve_nutrient(&spec, 0.0, &g).unwrap();
            g.nodes()
                .iter()
                .zip(sol.c.values())
                .map(|(&r, &c)| (c - sinh_profile(1.0, r)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(101), err(201), err(401));
        assert!(e1 / e2 > 3.5 && e2 / e3 > 3.5, "{e1} {e2} {e3}");
    }

    #[test]
    fn cache_reuses_solution() {
        let g = RadialGrid::uniform(101).unwrap();
        let mut cache = NutrientCache::new(&KineticsSpec::default(), &g);
        let a = cache.solve(0.3).unwrap().c.values().to_vec();
        let b = cache.solve(0.31).unwrap().iterations;
        assert!(b <= 4);
        let c = cache.solve(0.3).unwrap().c.values().to_vec();
        for (x, y) in a.iter().zip(&c) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
