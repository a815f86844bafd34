//! Splitting-based variational integrators for the Kepler problem and its
//! relativistic (proper-time) counterpart.
//!
//! The crate is organized around five modules:
//!
//! - [`kepler`]: the Kepler system, conserved quantities, Noether
//!   characteristics, the analytic elliptic reference and period averages.
//! - [`integrators`]: symplectic Euler, Störmer–Verlet and the split
//!   variational integrators VI-1/VI-2 in both composition and discrete
//!   Euler–Lagrange form.
//! - [`relativistic`]: exact sub-flows of the proper-time relativistic Kepler
//!   system and the K-symplectic compositions built from them.
//! - [`variational`]: numerical Helmholtz-condition checks and the Vainberg
//!   Lagrangian.
//! - [`modified`]: modified equations and Lagrangians, and predicted versus
//!   measured drift of the Laplace–Runge–Lenz vector.

// `!(h > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod integrators;
pub mod kepler;
pub mod modified;
pub mod relativistic;
pub mod variational;

pub use error::{GeodynError, Result};
pub use kepler::{PhaseState, SplitPotential, Vector};
