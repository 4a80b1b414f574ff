//! Pseudo-spectral building blocks for the Serre–Green–Naghdi equations on periodic domains.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod integrators;
pub mod krylov;
pub mod model;
pub mod operators;
pub mod scalar;
pub mod scenarios;

pub use error::{Result, SgnError};
pub use grid::{GridRef, PeriodicGrid, ScalarField, VectorField};
pub use scalar::Real;

/// Double-precision grid handle.
pub type Grid = GridRef<f64>;
/// Double-precision scalar field.
pub type Field = ScalarField<f64>;
/// Double-precision vector field.
pub type Vector = VectorField<f64>;
/// Single-precision scalar field.
pub type Field32 = ScalarField<f32>;
/// Single-precision vector field.
pub type Vector32 = VectorField<f32>;
