//! Radial grids, sampled fields on them, and the piecewise-cubic machinery
//! (slopes, interpolation, cumulative quadrature, derivatives) shared by the
//! solvers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {min} nodes, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("grid must start at 0 and end at 1 (got {first}, {last})")]
    Endpoints { first: f64, last: f64 },
    #[error("grid nodes not strictly increasing at index {index}")]
    NotMonotone { index: usize },
    #[error("field length {got} does not match grid size {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite field value at index {index}")]
    NonFinite { index: usize },
    #[error("grids differ")]
    Mismatch,
}

/// Strictly increasing nodes on [0,1] that include both endpoints.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    nodes: Arc<[f64]>,
    uniform: bool,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.nodes, &other.nodes) || self.nodes[..] == other.nodes[..]
    }
}

pub const MIN_NODES: usize = 6;

impl RadialGrid {
    pub fn uniform(m: usize) -> Result<Self, GridError> {
        if m < MIN_NODES {
            return Err(GridError::TooSmall { min: MIN_NODES, got: m });
        }
        let n = (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| i as f64 / n).collect();
        nodes[m - 1] = 1.0;
        Ok(Self { nodes: nodes.into(), uniform: true })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        Self::check(&nodes)?;
        let m = nodes.len();
        let h = 1.0 / (m - 1) as f64;
        let uniform = nodes
            .iter()
            .enumerate()
            .all(|(i, &r)| (r - i as f64 * h).abs() <= 1e-14);
        Ok(Self { nodes: nodes.into(), uniform })
    }

    fn check(nodes: &[f64]) -> Result<(), GridError> {
        if nodes.len() < MIN_NODES {
            return Err(GridError::TooSmall { min: MIN_NODES, got: nodes.len() });
        }
        let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
        if first != 0.0 || last != 1.0 {
            return Err(GridError::Endpoints { first, last });
        }
        for i in 1..nodes.len() {
            if !(nodes[i] > nodes[i - 1]) {
                return Err(GridError::NotMonotone { index: i });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Spacing of a uniform grid, or the mean spacing otherwise.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }
}

/// How a [`RadialField`] is interpolated between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Cubic Hermite with five-point slopes passed through a monotonicity
    /// filter; never overshoots the data on any interval.
    MonotoneCubic,
    /// Cubic Hermite with unfiltered five-point slopes (fourth order).
    Cubic,
    /// Cubic Hermite with slopes supplied by the producer of the field.
    Hermite,
}

#[derive(Debug, Clone)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<f64>,
    slopes: Vec<f64>,
    interp: Interpolation,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>, interp: Interpolation) -> Result<Self, GridError> {
        if interp == Interpolation::Hermite {
            // Without explicit slopes fall back to the unfiltered estimate.
            return Self::new(grid, values, Interpolation::Cubic);
        }
        Self::validate(&grid, &values)?;
        let mut slopes = lagrange_slopes(grid.nodes(), &values);
        if interp == Interpolation::MonotoneCubic {
            limit_slopes(grid.nodes(), &values, &mut slopes);
        }
        Ok(Self { grid, values, slopes, interp })
    }

    pub fn with_slopes(grid: RadialGrid, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self, GridError> {
        Self::validate(&grid, &values)?;
        Self::validate(&grid, &slopes)?;
        Ok(Self { grid, values, slopes, interp: Interpolation::Hermite })
    }

    pub fn from_fn(grid: &RadialGrid, interp: Interpolation, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid.clone(), values, interp).expect("closure produced a non-finite value")
    }

    fn validate(grid: &RadialGrid, values: &[f64]) -> Result<(), GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, r: f64) -> f64 {
        let x = self.grid.nodes();
        let i = locate(x, r);
        hermite(x[i], x[i + 1], self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1], r)
    }

    /// Derivative of the interpolant.
    pub fn eval_deriv(&self, r: f64) -> f64 {
        let x = self.grid.nodes();
        let i = locate(x, r);
        hermite_deriv(x[i], x[i + 1], self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1], r)
    }

    /// Evaluate at nondecreasing query points in one sweep.
    pub fn eval_sorted(&self, rs: &[f64], out: &mut [f64]) {
        let x = self.grid.nodes();
        let mut i = 0usize;
        let last = x.len() - 2;
        for (q, o) in rs.iter().zip(out.iter_mut()) {
            while i < last && *q > x[i + 1] {
                i += 1;
            }
            if *q < x[i] {
                i = locate(x, *q);
            }
            *o = hermite(x[i], x[i + 1], self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1], *q);
        }
    }

    /// Fourth-order nodal derivative (five-point central stencil,
    /// one-sided near the ends).
    pub fn derivative(&self) -> Vec<f64> {
        lagrange_slopes(self.grid.nodes(), &self.values)
    }

    pub fn map(&self, interp: Interpolation, f: impl Fn(f64, f64) -> f64) -> RadialField {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| f(r, v))
            .collect();
        RadialField::new(self.grid.clone(), values, interp).expect("mapped field is not finite")
    }

    pub fn same_grid(&self, other: &RadialField) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }
}

/// Index `i` with `x[i] <= r <= x[i+1]`, clamped to the table.
pub fn locate(x: &[f64], r: f64) -> usize {
    let n = x.len();
    let k = x.partition_point(|&v| v <= r);
    k.clamp(1, n - 1) - 1
}

#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

#[inline]
pub fn hermite_deriv(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
}

/// Derivative at `xs[at]` of the polynomial interpolating `(xs, ys)`.
pub fn lagrange_derivative(xs: &[f64], ys: &[f64], at: usize) -> f64 {
    let xi = xs[at];
    let mut sum = 0.0;
    for j in 0..xs.len() {
        let w = if j == at {
            (0..xs.len()).filter(|&k| k != at).map(|k| 1.0 / (xi - xs[k])).sum::<f64>()
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for k in 0..xs.len() {
                if k != j {
                    den *= xs[j] - xs[k];
                    if k != at {
                        num *= xi - xs[k];
                    }
                }
            }
            num / den
        };
        sum += w * ys[j];
    }
    sum
}

/// Nodal slopes from five-point Lagrange stencils (centered in the
/// interior, shifted at the ends). Exact for quartics.
pub fn lagrange_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let width = n.min(5);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(width / 2).min(n - width);
            lagrange_derivative(&x[start..start + width], &y[start..start + width], i - start)
        })
        .collect()
}

/// Monotonicity filter on Hermite slopes: at a local extremum of the data
/// the slope is zero, elsewhere it takes the sign of the neighbouring secants
/// and is capped at three times the smaller secant.
#[allow(clippy::needless_range_loop)]
pub fn limit_slopes(x: &[f64], y: &[f64], d: &mut [f64]) {
    let n = x.len();
    let secant = |i: usize| (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    for i in 0..n {
        let (lo, hi) = match i {
            0 => {
                let s = secant(0);
                (s, s)
            }
            _ if i == n - 1 => {
                let s = secant(n - 2);
                (s, s)
            }
            _ => (secant(i - 1), secant(i)),
        };
        if lo * hi <= 0.0 {
            d[i] = 0.0;
            continue;
        }
        let cap = 3.0 * lo.abs().min(hi.abs());
        if d[i] * lo <= 0.0 {
            d[i] = 0.0;
        } else if d[i].abs() > cap {
            d[i] = cap.copysign(lo);
        }
    }
}

/// Running integral of `y` from `x[0]`, exact for the cubic Hermite
/// interpolant with slopes `d`.
pub fn cumulative_hermite(x: &[f64], y: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..x.len() - 1 {
        let h = x[i + 1] - x[i];
        acc += 0.5 * h * (y[i] + y[i + 1]) + h * h * (d[i] - d[i + 1]) / 12.0;
        out.push(acc);
    }
    out
}

/// Running integral using five-point slopes (fourth order on smooth data).
pub fn cumulative_integral(x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = lagrange_slopes(x, y);
    cumulative_hermite(x, y, &d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = RadialGrid::uniform(11).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[10], 1.0);
        assert!(g.is_uniform());
        assert!(RadialGrid::uniform(3).is_err());
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(matches!(
            RadialGrid::from_nodes(vec![0.0, 0.2, 0.2, 0.5, 0.7, 1.0]),
            Err(GridError::NotMonotone { index: 2 })
        ));
        assert!(matches!(
            RadialGrid::from_nodes(vec![0.0, 0.2, 0.3, 0.5, 0.7, 0.9]),
            Err(GridError::Endpoints { .. })
        ));
    }

    #[test]
    fn slopes_exact_for_quartic() {
        let x: Vec<f64> = (0..9).map(|i| (i as f64 / 8.0).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.0 - 2.0 * t + t.powi(4)).collect();
        let d = lagrange_slopes(&x, &y);
        for (t, di) in x.iter().zip(&d) {
            assert!((di - (-2.0 + 4.0 * t.powi(3))).abs() < 1e-11);
        }
    }

    #[test]
    fn cubic_reproduced_exactly() {
        let g = RadialGrid::uniform(21).unwrap();
        let f = |r: f64| 0.2 + 0.3 * r + 0.1 * r * r + 0.05 * r * r * r;
        for interp in [Interpolation::Cubic, Interpolation::MonotoneCubic] {
            let fld = RadialField::from_fn(&g, interp, f);
            for k in 0..97 {
                let r = k as f64 / 96.0;
                assert!((fld.eval(r) - f(r)).abs() < 1e-13, "{interp:?} at {r}");
            }
        }
    }

    #[test]
    fn monotone_rule_never_overshoots() {
        let g = RadialGrid::uniform(12).unwrap();
        let vals = vec![0.0, 0.0, 1.0, 1.0, 0.2, 0.9, 0.9, -0.5, 0.3, 0.3, 2.0, 2.0];
        let fld = RadialField::new(g.clone(), vals.clone(), Interpolation::MonotoneCubic).unwrap();
        let x = g.nodes();
        for i in 0..x.len() - 1 {
            let (lo, hi) = (vals[i].min(vals[i + 1]), vals[i].max(vals[i + 1]));
            for k in 0..=50 {
                let r = x[i] + (x[i + 1] - x[i]) * k as f64 / 50.0;
                let v = fld.eval(r);
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn cumulative_integral_of_polynomial() {
        let g = RadialGrid::uniform(41).unwrap();
        let y: Vec<f64> = g.nodes().iter().map(|&r| r * r).collect();
        let i = cumulative_integral(g.nodes(), &y);
        for (r, v) in g.nodes().iter().zip(&i) {
            assert!((v - r.powi(3) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sorted_evaluation_matches_pointwise() {
        let g = RadialGrid::uniform(30).unwrap();
        let fld = RadialField::from_fn(&g, Interpolation::Cubic, |r| (3.0 * r).sin());
        let qs: Vec<f64> = (0..200).map(|k| (k as f64 / 199.0).powi(2)).collect();
        let mut out = vec![0.0; qs.len()];
        fld.eval_sorted(&qs, &mut out);
        for (q, o) in qs.iter().zip(&out) {
            assert_eq!(*o, fld.eval(*q));
        }
    }
}
