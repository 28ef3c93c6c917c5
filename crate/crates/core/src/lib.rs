//! Identification of linear state-space models whose state trajectories obey
//! known linear equality constraints `Sx = s`.
//!
//! The crate maps the state constraint onto the stacked parameter vector
//! `θ = [vec(A); vec(B)]` as `Dθ = d` and provides batch (LS, CLS, relaxed
//! CLS) and recursive (RCLS, RWLS, RWCLS) estimators, a simulator for
//! constraint-compatible systems, and a Monte Carlo harness.

pub mod cli;
pub mod constraint_map;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod simulator;

pub use error::{Error, Result};
