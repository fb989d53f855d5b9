//! Numerical toolkit for memory-type null control of one-dimensional
//! degenerate parabolic equations with Volterra memory.
//!
//! The pipeline is: [`coefficients`] (what `a`, `b` and `M` are) ->
//! [`discretization`] (grid, weights, tridiagonal operators) ->
//! [`evolution`] (theta-scheme with trapezoidal memory) -> [`duality`]
//! (control-to-target map and its exact discrete adjoint) -> [`hum`]
//! (penalized HUM by conjugate gradient) -> [`experiments`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod config;
pub mod discretization;
pub mod duality;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod hum;
pub mod svg;
pub mod tridiag;

pub use error::{Error, Result};
