//! Hyperbolicity and eigenstructure of the two-layer shallow-water system
//! with a free surface.
//!
//! The crate works pointwise on a layer state `(h1, h2, u1, u2, v1, v2)`
//! (layer 1 on top, density ratio `gamma = rho1 / rho2`) and on the augmented
//! conservative state that adds the layer vorticities `(w1, w2)`.
//!
//! - [`model`]: quasilinear matrices, rotations, source terms, energies.
//! - [`polynomial`]: characteristic quartic, Bezout matrix, real-root certificate.
//! - [`hyperbolicity`]: critical Froude numbers, 1D/2D criteria, symmetrizer.
//! - [`eigen`]: labeled spectra, closed-form eigenvectors, field classification,
//!   asymptotic expansions.
//! - [`evolution`]: symbol exponentials and exact per-mode linear evolution.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod evolution;
pub mod hyperbolicity;
pub mod model;
pub mod polynomial;

mod tristate;

pub use error::{Error, Result};
pub use tristate::TriState;

/// Default relative tolerance for strict-inequality criteria.
pub const DEFAULT_TOL: f64 = 1e-9;
