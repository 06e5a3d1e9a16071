//! Numerical laboratory for strongly coupled Schrödinger systems
//!
//! ```text
//! i∂t y1 + a11 Δy1 + a12 Δy2 + a y1 + b y2 = f1
//! i∂t y2 + a21 Δy1 + a22 Δy2 + c y1 + d y2 = f2
//! ```
//!
//! on an interval with Dirichlet data. The crate covers the discretization
//! ([`grid`], [`forward`]), the coefficient model and its certification
//! ([`model`]), construction and certification of Carleman weights
//! ([`weights`]), empirical evaluation of the internal and boundary Carleman
//! inequalities ([`carleman`]) and the Lipschitz-stability and reconstruction
//! pipelines for the potential `a(x)` ([`inverse`]).

pub mod banded;
pub mod carleman;
pub mod cert;
pub mod error;
pub mod expr;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod model;
pub mod records;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
