//! Difference-signal amplification (DSA) for precision metrology with a
//! classically mixed spin: closed forms, a seedable Monte Carlo model of the
//! Stern-Gerlach measurement, difference-signal estimators and figure sweeps.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod sampler;
pub mod sweep;

pub use error::{DsaError, Result};

/// Version string embedded in CSV metadata and run manifests.
pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
