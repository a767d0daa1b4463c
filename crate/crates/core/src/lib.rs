//! Interacting square-root diffusions with mean-field drift.
//!
//! The crate simulates systems of `n` particles
//!
//! ```text
//! dX_i = [δ + (m_n − X_i)·φ(ρⁿ)] dt + √X_i·g(X_i) dW_i
//! ```
//!
//! where `ρⁿ` is the empirical measure and `m_n` its mean, solves the
//! McKean–Vlasov limit as `n → ∞`, and checks both against analytic objects:
//! the variance ODE, the Laplace-transform PDE, the stationary Gamma law and the
//! boundary classification at zero. The [`ldp`] module adds Girsanov-tilted
//! dynamics, importance sampling and empirical decay rates of rare events.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod csv;
pub mod error;
pub mod ldp;
pub mod mckean_vlasov;
pub mod measures;
pub mod model;
pub mod particle_system;
pub mod rng;
pub mod sde_engine;
pub mod special;

pub use error::{Error, Result};
pub use measures::{EmpiricalMeasure, GammaParams, MeasurePath};
pub use model::{GSpec, InitialLaw, ModelSpec, PhiSpec};
pub use sde_engine::{Scheme, SchemeConfig};
