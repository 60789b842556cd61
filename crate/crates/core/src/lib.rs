//! Guaranteed hedge prices for rainbow options in interval market models.

pub mod continuum;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod minmax;
pub mod lattice;
pub mod payoffs;
pub mod quadrature;
pub mod submodular;

pub use error::{HedgeError, Result};
