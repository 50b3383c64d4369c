//! Time-delayed and adaptive-robust control for uncertain Euler-Lagrange
//! systems.
//!
//! The crate bundles four pieces that belong together:
//!
//! * [`stability`] — delay/gain feasibility certificates built from a
//!   Lyapunov solve and block positive-definiteness tests, plus the largest
//!   feasible sampling-interval search and ultimate-bound arithmetic.
//! * [`estimator`] — polynomial-kernel estimation of state derivatives from
//!   a window of past position samples.
//! * [`controllers`] — the TDC, F-TDC, ASMC and TARC control laws behind a
//!   single step interface, with their switching-gain adaptation laws.
//! * [`plants`] / [`simulator`] — simulated uncertain plants (two-link arm,
//!   wheeled mobile robot) and a fixed-step delay-aware closed-loop runner
//!   with trace recording and metrics.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases below pin the default `f64` types.

pub mod controllers;
pub mod error;
pub mod estimator;
pub mod history;
pub mod linalg;
pub mod plants;
pub mod scalar;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;
/// Dynamically sized matrix at the default precision.
pub type Matrix = nalgebra::DMatrix<Real>;
/// Dynamically sized column vector at the default precision.
pub type Vector = nalgebra::DVector<Real>;
