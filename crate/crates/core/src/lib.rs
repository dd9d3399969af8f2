//! Pathwise Volterra integration against Hilbert-valued Gaussian paths.
//!
//! The Hilbert space is represented by a fixed finite orthonormal-basis
//! truncation. Paths live on uniform dyadic grids, integrals are computed as
//! left-endpoint Riemann sums over nested dyadic partitions, and every
//! integrator reports its refinement history.

pub mod cli;
pub mod covariance;
pub mod error;
pub mod fracou;
pub mod hilbert;
pub mod integrate1d;
pub mod integrate2d;
pub mod kernels;
pub mod mcverify;
pub mod par;
pub mod paths;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use hilbert::{HOperator, HVector};
pub use paths::{Grid, GridPath, VolterraGridPath};
