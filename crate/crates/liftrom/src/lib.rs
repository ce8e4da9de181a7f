//! Lifting-based nonlinear model reduction.
//!
//! The crate turns general nonlinear ODE systems into equivalent polynomial
//! (quartic) ODEs or quadratic-bilinear (QB) ODE/DAE systems by introducing
//! auxiliary variables, builds POD-Galerkin reduced models whose operators are
//! fully precomputed offline, and ships two benchmark studies
//! (FitzHugh-Nagumo and a non-adiabatic tubular reactor) together with a
//! POD-DEIM baseline for comparison.
//!
//! Module map:
//! - [`tensor`]: dense/sparse kernels — Kronecker products, matricized-tensor
//!   contractions, thin SVD, method of snapshots.
//! - [`dynamics`]: system containers (general nonlinear, quartic, QB),
//!   right-hand-side evaluation and fixed-step time integration for stiff
//!   ODEs and index-1 DAEs.
//! - [`models`]: finite-difference discretizations of the two benchmark PDEs
//!   plus their lifted forms and consistent initial conditions.
//! - [`reduction`]: snapshot handling, per-variable POD, structure-preserving
//!   Galerkin projection, the substituted reduced DAE form, and DEIM.
//! - [`bench`]: error metrics, quantities of interest, experiment pipelines.
//! - [`io`]: JSON schemas for matrices/tensors/operators and run manifests.

pub mod bench;
pub mod dynamics;
mod error;
pub mod io;
pub mod models;
pub mod reduction;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};

/// Dense column-major matrix of `f64` used across the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense column vector of `f64`.
pub type Vector = nalgebra::DVector<f64>;
