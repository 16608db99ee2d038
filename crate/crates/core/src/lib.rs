//! Sine pseudo-spectral simulator for the damped hyperbolic Cahn-Hilliard equation
//!
//! ```text
//! u_tt + u_t + A(A u + f(u)) = g,   u = Lap u = 0 on the boundary,
//! ```
//!
//! on a square, together with the energy functionals and numerical experiments
//! used to verify its long-time behaviour.

// `!(x <= tol)` is used on purpose so that NaN fails the comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checks;
pub mod error;
pub mod integrator;
pub mod krylov;
pub mod model;
pub mod spectral;
pub mod state;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use state::State;
