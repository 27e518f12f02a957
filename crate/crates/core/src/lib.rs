//! Spectral analysis of a lattice three-particle Fock-space Hamiltonian.
//!
//! The crate evaluates the Friedrichs-model determinant `Delta(p, z)` of the
//! two-particle fibers, locates and classifies the essential spectrum, counts
//! discrete eigenvalues through a Nystrom discretization of the
//! Birman-Schwinger operator, and computes the Efimov coefficient from the
//! spherical kernel.

pub mod birman_schwinger;
pub mod config;
pub mod efimov;
pub mod error;
pub mod friedrichs;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod solve;
pub mod special;
pub mod torus;

pub use error::{Error, Result};
