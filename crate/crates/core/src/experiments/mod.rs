//! Monte Carlo error estimation, seeded parameter sweeps with resumable
//! on-disk journals, phase diagrams and classifier comparison.

mod compare;
mod phase;
mod sweep;
mod trial;

pub use compare::{compare_classifiers, compare_sweep, ComparisonRow};
pub use phase::{phase_diagram, Axis, Overlay, PhaseDiagram, PhaseSpec};
pub use sweep::{
    aggregate, parse_trials_csv, read_trials_csv, run_sweep, sort_rows, trial_seed, write_trials_csv,
    FailedTrial, GridPoint, GridSpec, PointSpec, SkippedPoint, SweepOptions, SweepOutput, SweepRecord,
    SweepSpec, SweepSummary, TrialRow, JOURNAL, MAX_SWEEP_D, MAX_SWEEP_N, SIDECAR_JSON, TRIALS_CSV,
};
pub use trial::{
    params_digest, run_trial, run_trial_with, run_trial_with_scorer, Classifier, TrialOptions, TrialResult,
    TrialSpec,
};
