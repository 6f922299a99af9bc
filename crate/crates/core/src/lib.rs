//! Finite-element laboratory for the Cattaneo (damped wave) and heat
//! equations on the unit square, their tracking-type optimal control
//! problems, and τ → 0 convergence studies.

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod plot;
pub mod problems;
pub mod sparse;
pub mod steppers;
pub mod study;
pub mod trajectory;

pub use error::{Error, Result};
pub use fem::{Discretization, FeFunction};
pub use mesh::StructuredTriMesh;
pub use sparse::{factorize_spd, CsrMatrix, SpdFactor};
pub use trajectory::{TimeGrid, Trajectory};
