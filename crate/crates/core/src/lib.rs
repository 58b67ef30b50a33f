//! Determinantal representation of transmission coefficients for discrete
//! Schrödinger operators on the integer lattice, with q-block transfer matrix
//! asymptotics and entropy scans of the spectral density.

pub mod cxmat;
pub mod det;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod scattering;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
