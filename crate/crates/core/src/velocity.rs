//! Velocity functional `u(r) = r^{-2} int_0^r g rho^2 drho` with density
//! `g = -K_D(c) + K_M(c) p`, and the frame-adjusted `w = u - r u(1)`.

use thiserror::Error;

use crate::field::{cumulative_hermite, lagrange_slopes, GridError, Interpolation, RadialField, RadialGrid};
use crate::kinetics::KineticsSpec;
use crate::nutrient::NutrientSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VelocityError {
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone)]
pub struct VelocityField {
    pub u: RadialField,
    pub w: RadialField,
    pub u_boundary: f64,
    /// `w / (r (1 - r))` with the limits `w'(0)` and `-w'(1)` at the ends.
    pub w_over_weight: RadialField,
    /// Density `g` at the nodes.
    pub density: Vec<f64>,
}

/// Nodal `u` (with `u(0) = 0`) from density samples `g` at increasing
/// positions `x` that start at 0; returns `u(x_last)`.
pub fn integrate_velocity(x: &[f64], g: &[f64], u: &mut [f64]) -> f64 {
    let y: Vec<f64> = x.iter().zip(g).map(|(&r, &gi)| gi * r * r).collect();
    let d = lagrange_slopes(x, &y);
    let cum = cumulative_hermite(x, &y, &d);
    u[0] = 0.0;
    for i in 1..x.len() {
        u[i] = cum[i] / (x[i] * x[i]);
    }
    u[x.len() - 1]
}

/// Velocity from a density already sampled on the grid.
pub fn velocity_from_density(grid: &RadialGrid, density: Vec<f64>) -> Result<VelocityField, VelocityError> {
    let r = grid.nodes();
    let m = r.len();
    if density.len() != m {
        return Err(GridError::Length { expected: m, got: density.len() }.into());
    }
    let mut u = vec![0.0; m];
    let u1 = integrate_velocity(r, &density, &mut u);
    let w: Vec<f64> = r.iter().zip(&u).map(|(&ri, &ui)| ui - ri * u1).collect();
    let mut theta = vec![0.0; m];
    theta[0] = density[0] / 3.0 - u1;
    theta[m - 1] = 3.0 * u1 - density[m - 1];
    for i in 1..m - 1 {
        theta[i] = w[i] / (r[i] * (1.0 - r[i]));
    }
    let mut w = w;
    w[m - 1] = 0.0;
    Ok(VelocityField {
        u: RadialField::new(grid.clone(), u, Interpolation::Cubic)?,
        w: RadialField::new(grid.clone(), w, Interpolation::Cubic)?,
        u_boundary: u1,
        w_over_weight: RadialField::new(grid.clone(), theta, Interpolation::Cubic)?,
        density,
    })
}

pub fn radial_velocity(
    p: &RadialField,
    nutrient: &NutrientSolution,
    spec: &KineticsSpec,
) -> Result<VelocityField, VelocityError> {
    p.same_grid(&nutrient.c)?;
    let density = nutrient
        .c
        .values()
        .iter()
        .zip(p.values())
        .map(|(&c, &pv)| spec.growth(c, pv))
        .collect();
    velocity_from_density(p.grid(), density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nutrient::solve_nutrient;

    #[test]
    fn unit_density_gives_linear_velocity() {
        let g = RadialGrid::uniform(101).unwrap();
        let v = velocity_from_density(&g, vec![1.0; 101]).unwrap();
        for (&r, &u) in g.nodes().iter().zip(v.u.values()) {
            assert!((u - r / 3.0).abs() < 1e-15);
        }
        assert!(v.w.values().iter().all(|w| w.abs() < 1e-15));
        assert_eq!(v.u.values()[0], 0.0);
    }

    #[test]
    fn balanced_density_gives_rest() {
        let spec = KineticsSpec::default();
        let g = RadialGrid::uniform(201).unwrap();
        let nut = solve_nutrient(&spec, 0.5, &g).unwrap();
        let p: Vec<f64> = nut.c.values().iter().map(|&c| {
            let r = spec.rates(c);
            r.kd / r.km
        }).collect();
        let p = RadialField::new(g.clone(), p, Interpolation::Cubic).unwrap();
        let v = radial_velocity(&p, &nut, &spec).unwrap();
        assert!(v.u.sup_norm() < 1e-15);
        assert!(v.w.sup_norm() < 1e-15);
        assert_eq!(v.w.values()[200], 0.0);
    }

    #[test]
    fn endpoint_limits_of_weighted_velocity() {
        let g = RadialGrid::uniform(401).unwrap();
        let dens: Vec<f64> = g.nodes().iter().map(|&r| 1.0 - 3.0 * r * r).collect();
        let v = velocity_from_density(&g, dens).unwrap();
        let t = v.w_over_weight.values();
        // u = r/3 - 3 r^3/5, u(1) = -4/15.
        assert!((v.u_boundary + 4.0 / 15.0).abs() < 1e-10);
        assert!((t[1] - t[0]).abs() < 1e-2);
        assert!((t[399] - t[400]).abs() < 1e-2);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let spec = KineticsSpec::default();
        let nut = solve_nutrient(&spec, 0.0, &RadialGrid::uniform(51).unwrap()).unwrap();
        let p = RadialField::from_fn(&RadialGrid::uniform(61).unwrap(), Interpolation::Cubic, |_| 0.5);
        assert!(radial_velocity(&p, &nut, &spec).is_err());
    }
}
