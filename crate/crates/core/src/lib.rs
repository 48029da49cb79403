//! Certified spectral Galerkin error bounds for the incompressible
//! Navier-Stokes equations on the d-dimensional torus.
//!
//! The crate is organised bottom-up:
//!
//! - [`field`]: Fourier representation of real vector fields, Sobolev norms,
//!   Leray projection, the advection bilinear map and Galerkin truncation.
//! - [`forcing`]: forcing models, the quadratic right-hand side and the
//!   zero-mean frame reduction.
//! - [`constants`]: lattice-sum brackets and the bilinear-estimate constants `K_n`.
//! - [`semigroup`]: heat-semigroup estimators and the Mittag-Leffler function.
//! - [`control`]: closed-form solutions of the quadratic control inequality.
//! - [`grid`]: piecewise-linear numerical solver for the control inequality.
//! - [`galerkin`]: Galerkin ODE integration, Picard iterates and balance checks.
//! - [`scenario`]: scenario files, the certification pipeline and reports.

// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod control;
pub mod error;
pub mod field;
pub mod forcing;
pub mod galerkin;
pub mod grid;
pub mod quad;
pub mod rounding;
pub mod scenario;
pub mod semigroup;

pub use error::{Error, Result};
