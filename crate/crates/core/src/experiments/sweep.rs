use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trial::{params_digest, run_trial_with, Classifier, TrialOptions, TrialResult};
use crate::ensemble::BilevelParams;
use crate::error::{Error, Result};
use crate::interpolator::TestScoring;
use crate::regimes::{annotate, RegimeAnnotations};
use crate::stats::{mean, median, wilson_interval, Z95};

/// Largest training-set size a sweep will run.
pub const MAX_SWEEP_N: usize = 1600;
/// Largest feature count a sweep will run.
pub const MAX_SWEEP_D: usize = 10_000_000;

pub const TRIALS_CSV: &str = "trials.csv";
pub const SIDECAR_JSON: &str = "sweep.json";
pub const JOURNAL: &str = "trials.jsonl";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub n: Vec<usize>,
}

/// An explicitly listed exponent tuple, swept over its own `n` list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
    /// Falls back to the sweep-level `c_k`.
    #[serde(default)]
    pub c_k: Option<usize>,
    pub n: Vec<usize>,
}

fn default_c_k() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Cartesian grid; may be omitted when `points` is given.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    #[serde(default = "default_c_k")]
    pub c_k: usize,
    /// Seeds per grid point.
    pub seeds: usize,
    pub test_points: usize,
    pub classifiers: Vec<Classifier>,
    pub base_seed: u64,
    #[serde(default)]
    pub scoring: TestScoring,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    /// Shape checks that do not depend on individual grid points.
    pub fn check(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("seeds must be at least 1".into()));
        }
        if self.test_points == 0 {
            return Err(Error::InvalidArgument("test_points must be at least 1".into()));
        }
        if self.classifiers.is_empty() {
            return Err(Error::InvalidArgument("classifiers must be nonempty".into()));
        }
        if self.grid_points().is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        Ok(())
    }

    /// All grid points, sorted and deduplicated.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        if let Some(g) = &self.grid {
            for &p in &g.p {
                for &q in &g.q {
                    for &r in &g.r {
                        for &t in &g.t {
                            for &n in &g.n {
                                out.push(GridPoint { p, q, r, t, n, c_k: self.c_k });
                            }
                        }
                    }
                }
            }
        }
        for pt in &self.points {
            for &n in &pt.n {
                out.push(GridPoint {
                    p: pt.p,
                    q: pt.q,
                    r: pt.r,
                    t: pt.t,
                    n,
                    c_k: pt.c_k.unwrap_or(self.c_k),
                });
            }
        }
        out.sort_by(GridPoint::cmp_total);
        out.dedup_by(|a, b| a.cmp_total(b) == Ordering::Equal);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
    pub n: usize,
    pub c_k: usize,
}

impl GridPoint {
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

    pub fn digest(&self) -> String {
        params_digest(&self.params())
    }

    pub fn cmp_total(&self, other: &Self) -> Ordering {
        self.p
            .total_cmp(&other.p)
            .then(self.q.total_cmp(&other.q))
            .then(self.r.total_cmp(&other.r))
            .then(self.t.total_cmp(&other.t))
            .then(self.n.cmp(&other.n))
            .then(self.c_k.cmp(&other.c_k))
    }

    /// Rejects points that are invalid or beyond the desk-scale caps.
    pub fn validate(&self) -> Result<()> {
        if self.n > MAX_SWEEP_N {
            return Err(Error::InvalidParams(format!(
                "n = {} exceeds the sweep cap {MAX_SWEEP_N}; use fewer training points",
                self.n
            )));
        }
        let sc = self.params().derive()?;
        if sc.d > MAX_SWEEP_D {
            return Err(Error::InvalidParams(format!(
                "d = {} exceeds the sweep cap {MAX_SWEEP_D}; lower p or n",
                sc.d
            )));
        }
        Ok(())
    }
}

/// Seed for the `index`-th trial at a grid point. Classifiers at the same
/// point and index share it, so their comparison is paired.
pub fn trial_seed(base_seed: u64, point: &GridPoint, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"mnilab/trial-seed/v1");
    h.update(base_seed.to_le_bytes());
    h.update(point.digest().as_bytes());
    h.update((index as u64).to_le_bytes());
    let bytes = h.finalize();
    u64::from_le_bytes(bytes[..8].try_into().expect("sha256 has 32 bytes"))
}

/// One row of the trials CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
    pub n: usize,
    pub c_k: usize,
    pub seed: u64,
    pub classifier: Classifier,
    pub test_points: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub wall_time_ms: u64,
}

impl TrialRow {
    pub fn point(&self) -> GridPoint {
        GridPoint {
            p: self.p,
            q: self.q,
            r: self.r,
            t: self.t,
            n: self.n,
            c_k: self.c_k,
        }
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.point()
            .cmp_total(&other.point())
            .then(self.classifier.cmp(&other.classifier))
            .then(self.seed.cmp(&other.seed))
    }
}

impl From<&TrialResult> for TrialRow {
    fn from(t: &TrialResult) -> Self {
        Self {
            p: t.params.p,
            q: t.params.q,
            r: t.params.r,
            t: t.params.t,
            n: t.n,
            c_k: t.params.c_k,
            seed: t.seed,
            classifier: t.classifier,
            test_points: t.test_points,
            errors: t.errors,
            error_rate: t.error_rate,
            wall_time_ms: t.wall_time_ms,
        }
    }
}

pub fn sort_rows(rows: &mut [TrialRow]) {
    rows.sort_by(TrialRow::cmp_key);
}

pub fn write_trials_csv(path: &Path, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let file = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trials_csv(file)
}

/// Parses trials CSV text, checking each row's internal consistency.
pub fn parse_trials_csv<R: std::io::Read>(reader: R) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        let row: TrialRow = row?;
        if row.test_points == 0 || row.errors > row.test_points {
            return Err(Error::InvalidArgument(format!(
                "row with {} errors out of {} test points",
                row.errors, row.test_points
            )));
        }
        if row.error_rate != row.errors as f64 / row.test_points as f64 {
            return Err(Error::InvalidArgument(format!(
                "error_rate {} disagrees with {}/{}",
                row.error_rate, row.errors, row.test_points
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Aggregate over the seeds of one (grid point, classifier).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub point: GridPoint,
    pub classifier: Classifier,
    /// Sorted ascending; `error_rates[i]` belongs to `seeds[i]`.
    pub seeds: Vec<u64>,
    pub error_rates: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Wilson interval on the pooled test points.
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub annotations: RegimeAnnotations,
}

/// Groups rows by (grid point, classifier). Output is sorted.
pub fn aggregate(rows: &[TrialRow]) -> Result<Vec<SweepRecord>> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut out = Vec::new();
    for group in rows.chunk_by(|a, b| {
        a.point().cmp_total(&b.point()) == Ordering::Equal && a.classifier == b.classifier
    }) {
        let first = &group[0];
        let point = first.point();
        let rates: Vec<f64> = group.iter().map(|r| r.error_rate).collect();
        let errors: u64 = group.iter().map(|r| r.errors as u64).sum();
        let total: u64 = group.iter().map(|r| r.test_points as u64).sum();
        let (wilson_lo, wilson_hi) = wilson_interval(errors, total, Z95);
        out.push(SweepRecord {
            point,
            classifier: first.classifier,
            seeds: group.iter().map(|r| r.seed).collect(),
            mean: mean(&rates),
            median: median(&rates),
            error_rates: rates,
            wilson_lo,
            wilson_hi,
            annotations: annotate(point.p, point.q, point.r, point.t)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: GridPoint,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub point: GridPoint,
    pub seed: u64,
    pub classifier: Classifier,
    pub reason: String,
}

/// JSON sidecar written next to the trials CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub spec: SweepSpec,
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<SkippedPoint>,
    pub failed: Vec<FailedTrial>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Thread count; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Where the journal, CSV and sidecar go. Without it nothing is written
    /// and nothing is resumed.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<TrialRow>,
    pub summary: SweepSummary,
    /// Trials taken from an existing journal instead of being rerun.
    pub resumed: usize,
}

type TrialKey = (String, u64, Classifier);

fn key_of(t: &TrialResult) -> TrialKey {
    (t.params_digest.clone(), t.seed, t.classifier)
}

fn read_journal(path: &Path) -> Result<Vec<TrialResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from an interrupted run is dropped and rerun.
        match serde_json::from_str::<TrialResult>(&line) {
            Ok(t) => out.push(t),
            Err(e) => log::warn!("ignoring unreadable journal line: {e}"),
        }
    }
    Ok(out)
}

/// Runs every (valid point, seed, classifier) trial. Invalid points are
/// recorded as skipped. With an output directory, each finished trial is
/// appended to a journal, trials already in the journal are not rerun, and
/// the sorted CSV plus JSON sidecar are written at the end. Any failed
/// trial turns the result into [`Error::PartialFailure`] after the outputs
/// are written.
pub fn run_sweep(spec: &SweepSpec, options: &SweepOptions) -> Result<SweepOutput> {
    spec.check()?;
    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    for point in spec.grid_points() {
        if let Err(e) = point.validate() {
            skipped.push(SkippedPoint {
                point,
                reason: e.to_string(),
            });
            continue;
        }
        for index in 0..spec.seeds {
            let seed = trial_seed(spec.base_seed, &point, index);
            for &classifier in &spec.classifiers {
                tasks.push((point, seed, classifier));
            }
        }
    }

    let mut done: Vec<TrialResult> = Vec::new();
    let mut journal = None;
    if let Some(dir) = &options.out_dir {
        fs::create_dir_all(dir).map_err(|source| Error::File {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join(JOURNAL);
        let wanted: HashSet<TrialKey> = tasks
            .iter()
            .map(|(pt, seed, c)| (pt.digest(), *seed, *c))
            .collect();
        let mut seen = HashSet::new();
        for t in read_journal(&path)? {
            let key = key_of(&t);
            if t.test_points == spec.test_points && wanted.contains(&key) && seen.insert(key) {
                done.push(t);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|source| Error::File {
            path: path.clone(),
            source,
        })?;
        journal = Some(Mutex::new(file));
    }
    let resumed = done.len();
    let completed: HashSet<TrialKey> = done.iter().map(key_of).collect();
    let pending: Vec<_> = tasks
        .into_iter()
        .filter(|(pt, seed, c)| !completed.contains(&(pt.digest(), *seed, *c)))
        .collect();

    let trial_options = TrialOptions {
        scoring: spec.scoring,
        diagnostics: false,
    };
    let run = || -> Vec<std::result::Result<TrialResult, FailedTrial>> {
        pending
            .par_iter()
            .map(|&(point, seed, classifier)| {
                let result = run_trial_with(&point.params(), point.n, seed, classifier, spec.test_points, trial_options)
                    .map_err(|e| FailedTrial {
                        point,
                        seed,
                        classifier,
                        reason: e.to_string(),
                    })?;
                if let Some(j) = &journal {
                    let line = serde_json::to_string(&result).expect("trial results serialize");
                    let mut f = j.lock().expect("journal lock");
                    if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                        log::warn!("journal write failed: {e}");
                    }
                }
                log::debug!(
                    "trial {} n={} seed={seed} {}: {:.4}",
                    point.digest(),
                    point.n,
                    classifier.as_str(),
                    result.error_rate
                );
                Ok(result)
            })
            .collect()
    };
    let outcomes = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut failed = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(t) => done.push(t),
            Err(f) => failed.push(f),
        }
    }
    failed.sort_by(|a, b| {
        a.point
            .cmp_total(&b.point)
            .then(a.classifier.cmp(&b.classifier))
            .then(a.seed.cmp(&b.seed))
    });
    let mut rows: Vec<TrialRow> = done.iter().map(TrialRow::from).collect();
    sort_rows(&mut rows);
    let summary = SweepSummary {
        spec: spec.clone(),
        records: aggregate(&rows)?,
        skipped,
        failed,
    };
    if let Some(dir) = &options.out_dir {
        write_trials_csv(&dir.join(TRIALS_CSV), &rows)?;
        let json = serde_json::to_string_pretty(&summary)?;
        fs::write(dir.join(SIDECAR_JSON), json + "\n")?;
    }
    if !summary.failed.is_empty() {
        return Err(Error::PartialFailure(
            summary
                .failed
                .iter()
                .map(|f| format!("{} n={} seed={} {}: {}", f.point.digest(), f.point.n, f.seed, f.classifier.as_str(), f.reason))
                .collect(),
        ));
    }
    Ok(SweepOutput {
        rows,
        summary,
        resumed,
    })
}
