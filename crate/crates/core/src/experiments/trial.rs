use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{diagnose, DiagnosticsReport, DEFAULT_SPECTRUM_CAP};
use crate::ensemble::{BilevelParams, TestBatch, TrainingSet};
use crate::error::{Error, Result};
use crate::interpolator::{averaging_batch_scores, mni_batch_scores, predictions, MniFit, TestScoring};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Mni,
    Averaging,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::Mni => "mni",
            Classifier::Averaging => "averaging",
        }
    }
}

impl std::str::FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mni" => Ok(Classifier::Mni),
            "averaging" => Ok(Classifier::Averaging),
            other => Err(Error::InvalidArgument(format!("unknown classifier {other:?}"))),
        }
    }
}

/// Stable hex digest of a parameter set. Floats are hashed by their bit
/// patterns so the digest never depends on formatting.
pub fn params_digest(params: &BilevelParams) -> String {
    let mut h = Sha256::new();
    h.update(b"mnilab/params/v1");
    h.update((params.n as u64).to_le_bytes());
    for v in [params.p, params.q, params.r, params.t] {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((params.c_k as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub params_digest: String,
    pub params: BilevelParams,
    pub n: usize,
    pub seed: u64,
    pub classifier: Classifier,
    pub test_points: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub diagnostics_summary: Option<DiagnosticsReport>,
    pub wall_time_ms: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOptions {
    pub scoring: TestScoring,
    /// Attach a [`DiagnosticsReport`] (MNI only).
    pub diagnostics: bool,
}

/// Fresh training set, fit, and `test_points` fresh test points.
pub fn run_trial(
    params: &BilevelParams,
    n: usize,
    seed: u64,
    classifier: Classifier,
    test_points: usize,
) -> Result<TrialResult> {
    run_trial_with(params, n, seed, classifier, test_points, TrialOptions::default())
}

pub fn run_trial_with(
    params: &BilevelParams,
    n: usize,
    seed: u64,
    classifier: Classifier,
    test_points: usize,
    options: TrialOptions,
) -> Result<TrialResult> {
    let scorer = |training: &TrainingSet, tests: &TestBatch| -> Result<DMatrix<f64>> {
        Ok(match classifier {
            Classifier::Mni => mni_batch_scores(&MniFit::new(training.clone())?, tests, options.scoring),
            Classifier::Averaging => averaging_batch_scores(training, tests, options.scoring),
        })
    };
    let mut result = run_trial_with_scorer(params, n, seed, classifier, test_points, scorer)?;
    if options.diagnostics && classifier == Classifier::Mni {
        result.diagnostics_summary = Some(diagnose(&params.with_n(n), seed, DEFAULT_SPECTRUM_CAP)?);
    }
    Ok(result)
}

/// [`run_trial`] with the scoring step supplied by the caller, which must
/// return a `k x T` score matrix.
pub fn run_trial_with_scorer<F>(
    params: &BilevelParams,
    n: usize,
    seed: u64,
    classifier: Classifier,
    test_points: usize,
    scorer: F,
) -> Result<TrialResult>
where
    F: FnOnce(&TrainingSet, &TestBatch) -> Result<DMatrix<f64>>,
{
    if test_points == 0 {
        return Err(Error::InvalidArgument("test_points must be at least 1".into()));
    }
    let started = Instant::now();
    let params = params.with_n(n);
    let scaling = params.derive()?;
    let training = TrainingSet::generate(&scaling, seed);
    let tests = TestBatch::sample(&scaling, seed, test_points);
    let scores = scorer(&training, &tests)?;
    if scores.nrows() != scaling.k || scores.ncols() != test_points {
        return Err(Error::InvalidArgument(format!(
            "scorer returned {}x{}, expected {}x{test_points}",
            scores.nrows(),
            scores.ncols(),
            scaling.k
        )));
    }
    let errors = predictions(&scores)
        .iter()
        .zip(&tests.points)
        .filter(|(pred, point)| **pred != point.true_label)
        .count();
    Ok(TrialResult {
        params_digest: params_digest(&params),
        params,
        n,
        seed,
        classifier,
        test_points,
        errors,
        error_rate: errors as f64 / test_points as f64,
        diagnostics_summary: None,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}

fn default_classifier() -> Classifier {
    Classifier::Mni
}

fn default_test_points() -> usize {
    500
}

/// JSON input of a single trial. The `diagnose` and `spectrum` commands
/// read the same schema and use only the parameters, seed and cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
    #[serde(default = "default_c_k")]
    pub c_k: usize,
    pub seed: u64,
    #[serde(default = "default_classifier")]
    pub classifier: Classifier,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    #[serde(default)]
    pub scoring: TestScoring,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub spectrum_cap: Option<usize>,
}

fn default_c_k() -> usize {
    1
}

impl TrialSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.params().validate()?;
        Ok(spec)
    }

    pub fn params(&self) -> BilevelParams {
        BilevelParams {
            n: self.n,
            p: self.p,
            q: self.q,
            r: self.r,
            t: self.t,
            c_k: self.c_k,
        }
    }

    pub fn spectrum_cap(&self) -> usize {
        self.spectrum_cap.unwrap_or(DEFAULT_SPECTRUM_CAP)
    }

    pub fn run(&self) -> Result<TrialResult> {
        let options = TrialOptions {
            scoring: self.scoring,
            diagnostics: self.diagnostics,
        };
        run_trial_with(&self.params(), self.n, self.seed, self.classifier, self.test_points, options)
    }
}
