//! Shrinking-target statistics for discrete flows on hyperbolic lattice quotients.

pub mod error;
pub mod fit;
pub mod flows;
pub mod group;
pub mod lattice;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod targets;

pub use error::{Error, Result};
