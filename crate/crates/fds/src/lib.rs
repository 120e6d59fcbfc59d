//! Tensor-network toolkit for the 2D classical N-state clock model.
//!
//! The crate contracts the clock-model partition function with isotropic
//! CTMRG at finite bond dimension, extracts magnetization, correlation
//! length and free energy, and provides the scaling analyses (bond-dimension
//! extrapolation, correlation-length fits, data collapses), a sine-Gordon
//! RG flow integrator, and exact small-scale verification of the related
//! Z_N lattice gauge theory, all backed by independent brute-force oracles.

pub mod checkpoint;
pub mod clock;
pub mod ctmrg;
pub mod error;
pub mod lgt;
mod linalg;
pub mod observables;
pub mod oracle;
pub mod rg;
pub mod scaling;
pub mod sweep;

pub use error::FdsError;
pub type Result<T> = std::result::Result<T, FdsError>;
