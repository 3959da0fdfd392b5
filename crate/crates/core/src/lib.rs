//! Minimum-norm interpolating multiclass classification under the bi-level
//! Gaussian ensemble: data generation, fitting, diagnostics, closed-form
//! regime predictions, concentration checks and sweep tooling.

pub mod cli;
pub mod concentration;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod interpolator;
pub mod linalg;
pub mod regimes;
pub mod stats;

pub use error::{Error, Result};
