//! Numerical laboratory for time-dependent mean field games on the flat torus.
//!
//! The crate solves the coupled backward Hamilton–Jacobi–Bellman / forward
//! Kolmogorov system with finite differences, evaluates the potential
//! functional of potential games and its second variation, certifies
//! stability of equilibria through the linearized forward–backward system,
//! and runs fictitious play.
//!
//! Everything is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`); the aliases below fix `f64`, which is what the stated
//! tolerances assume.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fictitious_play;
pub mod grid;
pub mod model;
pub mod nonuniqueness;
pub mod mfg;
pub mod pde;
pub mod potential;
pub mod rng;
pub mod scalar;
pub mod stability;

pub use error::{MfgError, Result};
pub use scalar::Scalar;

pub type Grid = grid::TorusGrid<f64>;
pub type Field = grid::ScalarField<f64>;
pub type Density = grid::DensityField<f64>;
pub type Flux = grid::FluxField<f64>;
