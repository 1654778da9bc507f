#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for the two-species radial tumor model with a free
//! boundary: nutrient and stationary solves, characteristic solvers for the
//! nonlinear and linearized evolutions, the similarity-map calculus, and the
//! stability experiments built on them.

pub mod experiments;
pub mod field;
pub mod kinetics;
pub mod linearized;
pub mod nutrient;
pub mod ode;
pub mod simmaps;
pub mod stationary;
pub mod transport;
pub mod velocity;

pub use field::{Interpolation, RadialField, RadialGrid};
pub use kinetics::{KineticsSpec, RateValues};
