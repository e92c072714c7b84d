//! Finite-element solvers for the non-linear quasi-static Biot model.
//!
//! Displacements live in continuous piecewise-linear vectors, Darcy fluxes in
//! lowest-order Raviart–Thomas and pressures in piecewise constants. Each
//! backward-Euler step is solved either by the splitting L-scheme (flow, then
//! mechanics) or by the monolithic L-scheme.

pub mod assembly;
pub mod bench;
pub mod cli;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod physics;
pub mod schemes;

pub use error::{Error, Result};
