//! Empirical checks of the bilinear Hanson-Wright variants, Gaussian
//! anticoncentration and equicorrelated orthant probabilities.

mod config;
mod orthant;
mod sampler;
mod tail;

pub use config::{HwTestConfig, HwTestReport, MatrixKind, OrthantConfig, RadiusConfig};
pub use orthant::{
    anticoncentration_bound, empirical_small_ball, orthant_probability, orthant_scaling, OrthantFit,
};
pub use sampler::{SamplerMode, SparsePairSampler, STANDARD_NORMAL_PSI2};
pub use tail::{
    analytic_mean, centered_forms, empirical_bilinear_tail, fit_hw_constant, hw_bound, hw_exponent,
    radius_scaling_fit, radius_vs_n_fit, FormMatrix, RadiusFit, TailEstimate, MIN_TAIL_TRIALS,
};
