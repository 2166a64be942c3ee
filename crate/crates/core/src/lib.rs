//! Regularized model predictive control.
//!
//! A finite-horizon MPC in the stacked (simultaneous) form whose design
//! matrix `H₁ = blockdiag(Q̄, R̄)` has its terminal block refreshed at every
//! step by a penalized-least-squares Riccati recursion. The crate also carries
//! the classical fixed-weight MPC baseline, the least-squares building blocks,
//! a dense active-set QP solver and numerical certificates for the steady-state
//! Riccati solution and closed-loop stability.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod controller;
pub mod error;
pub mod horizon;
pub mod matops;
pub mod model;
pub mod pls;
pub mod qp;
pub mod riccati;

pub use controller::{ClosedLoopRun, ControllerKind, RunMetrics};
pub use error::{Error, Result};
pub use matops::{DefinitenessClass, Mat, Vector};
pub use model::{BoxBounds, BoxConstraints, CostSpec, LtiSystem, Scenario};
