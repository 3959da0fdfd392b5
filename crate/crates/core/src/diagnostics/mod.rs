//! Survival, contamination, correlation and spectrum diagnostics of a fitted
//! instance, and scaling-exponent fits across `n`.

mod correlation;
mod fit;
mod spectrum;
mod survival;

pub use correlation::{correlation_report, CorrelationReport};
pub use fit::{fit_scaling_exponent, pair_report, ExponentFit, Quantity, MIN_GRID_POINTS, MIN_SEEDS};
pub use spectrum::{spectrum_report, SpectrumReport, DEFAULT_SPECTRUM_CAP};
pub use survival::{
    contamination_full_sum, feature_label_correlation, feature_label_normalizer,
    normalized_contamination_samples, survival_contamination, ContaminationSamples,
    FittedInstance, SurvivalContamination,
};

use serde::{Deserialize, Serialize};

use crate::ensemble::{BilevelParams, DerivedScaling, TrainingSet};
use crate::error::Result;
use crate::interpolator::{hat_spectrum_report, leave_out, HatSpectrumReport};

/// Everything `diagnose` reports for one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: BilevelParams,
    pub seed: u64,
    pub scaling: DerivedScaling,
    pub jitter_applied: f64,
    pub pair: SurvivalContamination,
    /// Present when `k >= 3`.
    pub correlation: Option<CorrelationReport>,
    pub hat_spectrum: HatSpectrumReport,
    /// Present when `n` is within the dense cap.
    pub spectrum: Option<SpectrumReport>,
}

pub fn diagnose(params: &BilevelParams, seed: u64, spectrum_cap: usize) -> Result<DiagnosticsReport> {
    let scaling = params.derive()?;
    let inst = FittedInstance::new(TrainingSet::generate(&scaling, seed))?;
    let pair = survival_contamination(&inst, 0, 1)?;
    let correlation = if scaling.k >= 3 {
        Some(correlation_report(&inst, 0)?)
    } else {
        None
    };
    let label: Vec<usize> = (0..scaling.k).collect();
    let lo = leave_out(inst.training(), &inst.fit.gram, &label, &label)?;
    let hat_spectrum = hat_spectrum_report(&lo, scaling.mu);
    let spectrum = if scaling.n <= spectrum_cap {
        Some(spectrum_report(&inst, spectrum_cap)?)
    } else {
        None
    };
    Ok(DiagnosticsReport {
        params: *params,
        seed,
        scaling,
        jitter_applied: inst.fit.gram.jitter_applied(),
        pair,
        correlation,
        hat_spectrum,
        spectrum,
    })
}
