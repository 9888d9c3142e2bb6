//! Interacting-particle simulation of degenerate McKean-Vlasov systems
//!
//! ```text
//! dX = B0[t, Z, mu] dt,   dY = B1[t, Z, mu] dt + Sigma[t, Z, mu] dW,
//! B[t, z, mu] = \int b(t, z, zeta) mu(d zeta)
//! ```
//!
//! together with coefficient mollification and the diagnostics that check
//! the a priori estimates, convergence ladders and increment independence
//! numerically.

pub mod coefficients;
pub mod diagnostics;
pub mod mollifier;
pub mod error;
pub mod integrator;
pub mod meanfield;
pub mod numeric;
pub mod persistence;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
