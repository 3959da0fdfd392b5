//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use mnilab::concentration::{
    anticoncentration_bound, empirical_small_ball, orthant_scaling, radius_scaling_fit, SamplerMode,
};
use mnilab::diagnostics::{
    correlation_report, feature_label_correlation, feature_label_normalizer, fit_scaling_exponent,
    pair_report, FittedInstance, SurvivalContamination,
};
use mnilab::ensemble::{BilevelParams, TestBatch, TrainingSet};
use mnilab::experiments::{
    compare_sweep, run_sweep, Classifier, PointSpec, SweepOptions, SweepRecord, SweepSpec,
};
use mnilab::interpolator::{leave_out, mni_batch_scores, MniFit, TestScoring};
use mnilab::linalg::psd_coupling_sides;
use mnilab::regimes::{averaging_threshold, mni_regime, mni_threshold, Verdict};
use mnilab::stats::{mean, median};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params(n: usize, p: f64, q: f64, r: f64, t: f64, c_k: usize) -> BilevelParams {
    BilevelParams { n, p, q, r, t, c_k }
}

/// Valid small instance with `n <= 50` and `d <= 500`.
fn random_small(rng: &mut ChaCha8Rng) -> BilevelParams {
    loop {
        let n = rng.random_range(12..=50usize);
        let p_max = (500f64).ln() / (n as f64).ln();
        let p = rng.random_range(1.2..p_max.min(2.5));
        let r = rng.random_range(0.35..0.75);
        let q = rng.random_range(0.05..(p - r).min(0.8));
        let t = rng.random_range(0.0..r * 0.6);
        let c_k = rng.random_range(1..=3usize);
        let cand = params(n, p, q, r, t, c_k);
        if let Ok(sc) = cand.derive() {
            if sc.d <= 500 && sc.n <= 50 {
                return cand;
            }
        }
    }
}

fn interpolation_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let sc = random_small(&mut rng).derive().unwrap();
        let fit = MniFit::new(TrainingSet::generate(&sc, 1000 + i)).unwrap();
        let x = fit.training.dense_weighted(1_000_000).unwrap();
        let coef = fit.dense_coefficients(1_000_000).unwrap();
        let fitted = &x * &coef;
        for m in 0..sc.k {
            let y = fit.training.y_centered.column(m);
            worst = worst.max((fitted.column(m) - y).norm() / y.norm());
        }
    }
    outcome(worst <= 1e-7, format!("worst relative residual {worst:.2e} over 50 instances"))
}

fn kernel_primal_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let sc = random_small(&mut rng).derive().unwrap();
        let fit = MniFit::new(TrainingSet::generate(&sc, 2000 + i)).unwrap();
        let coef = fit.dense_coefficients(1_000_000).unwrap();
        let tests = TestBatch::sample(&sc, 3000 + i, 8);
        let streamed = mni_batch_scores(&fit, &tests, TestScoring::Streamed);
        for pt in &tests.points {
            let x = tests.coordinates(pt.index, 0..sc.d);
            let xw = DVector::from_fn(sc.d, |j, _| sc.lambda(j).sqrt() * x[j]);
            let dense = coef.tr_mul(&xw);
            let col = streamed.column(pt.index);
            worst = worst.max((col - &dense).norm() / dense.norm());
        }
    }
    outcome(worst <= 1e-10, format!("worst relative score gap {worst:.2e} over 50 instances"))
}

fn push_through_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (i, &k) in [2usize, 3, 5].iter().cycle().take(20).enumerate() {
        // c_k = k with t = 0 pins the class count
        let sc = params(60 + 5 * i, 1.6, 0.3, 0.6, 0.0, k).derive().unwrap();
        let fit = MniFit::new(TrainingSet::generate(&sc, 4000 + i as u64)).unwrap();
        let label: Vec<usize> = (0..k).collect();
        let lo = leave_out(&fit.training, &fit.gram, &label, &label).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let v = DVector::from_fn(sc.n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lhs = lo.w_t.tr_mul(&fit.gram.solve(&v));
        let rhs = lo.push_through(&v).unwrap();
        worst = worst.max((&lhs - &rhs).norm() / lhs.norm());
        count += 1;
    }
    outcome(worst <= 1e-8, format!("worst relative gap {worst:.2e} over {count} instances, k in {{2,3,5}}"))
}

fn worked_example() -> Outcome {
    let mni = mni_threshold(1.1, 0.1, 0.5);
    let avg = averaging_threshold(1.1, 0.1, 0.5);
    let verdict = mni_regime(1.1, 0.1, 0.5, 0.3).unwrap().verdict;
    let pass = (mni - 0.1).abs() <= 1e-12 && (avg - 0.5).abs() <= 1e-12 && verdict == Verdict::Misclassifies;
    outcome(pass, format!("MNI threshold {mni}, averaging threshold {avg}, verdict at t=0.3 {verdict:?}"))
}

/// The 6-point validation grid: three Generalizes points with constant
/// `k` along `n`, three Misclassifies points, all with |margin| >= 0.15.
fn validation_points() -> Vec<(&'static str, BilevelParams)> {
    vec![
        ("G1", params(0, 1.5, 0.3, 0.5, 0.1, 3)),
        ("G2", params(0, 1.6, 0.6, 0.5, 0.1, 3)),
        ("G3", params(0, 1.5, 0.2, 0.6, 0.05, 4)),
        ("M1", params(0, 2.0, 0.9, 0.6, 0.3, 1)),
        ("M2", params(0, 1.2, 0.1, 0.5, 0.45, 1)),
        ("M3", params(0, 1.5, 0.5, 0.7, 0.4, 1)),
    ]
}

const PHASE_N: [usize; 4] = [100, 200, 400, 800];

fn validation_spec() -> SweepSpec {
    SweepSpec {
        grid: None,
        points: validation_points()
            .into_iter()
            .map(|(_, p)| PointSpec {
                p: p.p,
                q: p.q,
                r: p.r,
                t: p.t,
                c_k: Some(p.c_k),
                n: PHASE_N.to_vec(),
            })
            .collect(),
        c_k: 1,
        seeds: 20,
        test_points: 500,
        classifiers: vec![Classifier::Mni],
        base_seed: 5,
        scoring: TestScoring::Marginal,
    }
}

fn find<'a>(records: &'a [SweepRecord], p: &BilevelParams, n: usize) -> &'a SweepRecord {
    records
        .iter()
        .find(|r| r.point.p == p.p && r.point.q == p.q && r.point.r == p.r && r.point.t == p.t && r.point.n == n)
        .expect("validation point swept")
}

fn phase_direction(records: &[SweepRecord]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in validation_points() {
        let verdict = mni_regime(p.p, p.q, p.r, p.t).unwrap();
        assert!(verdict.margin.abs() >= 0.15, "{name} margin too small");
        let at400 = find(records, &p, 400).mean;
        match verdict.verdict {
            Verdict::Generalizes => {
                let medians: Vec<f64> = PHASE_N.iter().map(|&n| find(records, &p, n).median).collect();
                let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
                pass &= at400 < 0.35 && decreasing;
                let seq: Vec<String> = medians.iter().map(|m| format!("{m:.3}")).collect();
                parts.push(format!("{name} mean@400 {at400:.3} medians {}", seq.join(">")));
            }
            _ => {
                pass &= at400 > 0.55;
                parts.push(format!("{name} mean@400 {at400:.3}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn strong_converse(records: &[SweepRecord]) -> Outcome {
    let (_, m1) = validation_points().into_iter().find(|(n, _)| *n == "M1").unwrap();
    let (e200, e800) = (find(records, &m1, 200).mean, find(records, &m1, 800).mean);
    outcome(e800 > e200, format!("M1 mean error n=200 {e200:.3}, n=800 {e800:.3}"))
}

fn suboptimality() -> Outcome {
    let spec = SweepSpec {
        grid: None,
        points: vec![PointSpec {
            p: 1.1,
            q: 0.1,
            r: 0.5,
            t: 0.3,
            c_k: Some(1),
            n: vec![800],
        }],
        c_k: 1,
        seeds: 20,
        test_points: 500,
        classifiers: vec![Classifier::Mni, Classifier::Averaging],
        base_seed: 7,
        scoring: TestScoring::Marginal,
    };
    let out = run_sweep(&spec, &SweepOptions::default()).unwrap();
    let row = &compare_sweep(&out.summary.records).unwrap()[0];
    outcome(
        row.difference > 0.2,
        format!(
            "MNI {:.3}, averaging {:.3}, difference {:.3} (95% CI {:.3}..{:.3})",
            row.mni_mean, row.averaging_mean, row.difference, row.ci_lo, row.ci_hi
        ),
    )
}

fn survival_exponents() -> Outcome {
    let family = params(100, 2.0, 0.75, 0.5, 0.2, 1);
    let seeds: Vec<u64> = (0..10).collect();
    let jobs: Vec<(usize, u64)> = PHASE_N.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let reports: HashMap<(usize, u64), (SurvivalContamination, f64)> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let p = family.with_n(n);
            let mu = p.derive().unwrap().mu;
            ((n, s), (pair_report(&p, s).unwrap(), (1.0 / mu).min(1.0)))
        })
        .collect();
    let fit = |f: &(dyn Fn(&SurvivalContamination, f64) -> f64 + Sync)| {
        fit_scaling_exponent(|p, s| Ok(f(&reports[&(p.n, s)].0, reports[&(p.n, s)].1)), &family, &PHASE_N, &seeds)
            .unwrap()
            .slope
    };
    let normalized = fit(&|r, norm| r.survival / norm);
    let raw = fit(&|r, _| r.survival);
    let unfavored = fit(&|r, _| r.cn_unfavored);
    let (t, p) = (family.t, family.p);
    let target_u = (1.0 - t - p) / 2.0;
    let pass = (normalized + t).abs() <= 0.15 && (unfavored - target_u).abs() <= 0.15;
    outcome(
        pass,
        format!(
            "normalized survival slope {normalized:.3} (target {:.2}), unfavored contamination slope {unfavored:.3} (target {target_u:.2}); raw survival slope {raw:.3}",
            -t
        ),
    )
}

fn feature_label_bracket() -> Outcome {
    let sc = params(400, 1.5, 0.3, 0.5, 0.25, 1).derive().unwrap();
    let values: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let ts = TrainingSet::generate(&sc, 9000 + seed);
            feature_label_correlation(&ts, 0, 0)
        })
        .collect();
    let ratio = mean(&values) / feature_label_normalizer(sc.n, sc.k);
    let (lo, hi) = (1.0 / (std::f64::consts::PI * 2f64.ln()).sqrt() - 0.1, 2f64.sqrt() + 0.1);
    outcome(
        (lo..=hi).contains(&ratio),
        format!("normalized mean {ratio:.3} over 200 instances (k = {}), bracket [{lo:.3}, {hi:.3}]", sc.k),
    )
}

fn z_correlation() -> Outcome {
    let sc = params(400, 2.0, 0.9, 0.6, 0.3, 1).derive().unwrap();
    let pooled: Vec<f64> = (0..30u64)
        .into_par_iter()
        .flat_map(|seed| {
            let inst = FittedInstance::new(TrainingSet::generate(&sc, seed)).unwrap();
            correlation_report(&inst, 0).unwrap().off_diagonal()
        })
        .collect();
    let m = median(&pooled);
    outcome(
        (0.4..=0.6).contains(&m),
        format!("median off-diagonal correlation {m:.3} over 30 instances (k = {})", sc.k),
    )
}

fn radius_scaling() -> Outcome {
    let grid = [0.001, 0.004, 0.016, 0.064];
    let soft = radius_scaling_fit(SamplerMode::SoftBounded, 10_000, &grid, 0.99, 10_000, 1.0, 31).unwrap();
    let hard = radius_scaling_fit(SamplerMode::HardMasked, 10_000, &grid, 0.99, 10_000, 1.0, 32).unwrap();
    let pass = (soft.slope - 0.5).abs() <= 0.1 && (hard.slope - 0.5).abs() <= 0.1;
    outcome(pass, format!("soft slope {:.3}, hard slope {:.3}", soft.slope, hard.slope))
}

fn orthant() -> Outcome {
    let fit = orthant_scaling(0.5, &[4, 8, 16, 32], 1_000_000, 41).unwrap();
    outcome(
        (fit.slope + 1.0).abs() <= 0.2,
        format!("slope {:.3} with probabilities {:?}", fit.slope, fit.probabilities),
    )
}

fn psd_and_anticoncentration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut psd_fail = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=8usize);
        let n = rng.random_range(1..=8usize);
        let rank = rng.random_range(1..=m);
        let c = DMatrix::from_fn(rank, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let psd = c.tr_mul(&c);
        let b = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (lhs, rhs) = psd_coupling_sides(&psd, &b, &x);
        let scale = psd.norm() * (&b * &x).norm_squared();
        if lhs > rhs + 1e-12 * scale.max(1.0) {
            psd_fail += 1;
        }
    }
    let cases: Vec<(Vec<f64>, f64, u64)> = (0..1000u64)
        .map(|i| {
            let dim = rng.random_range(1..=6usize);
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            (v, norm * rng.random_range(0.0..1.5), i)
        })
        .collect();
    let anti_fail = cases
        .par_iter()
        .filter(|(v, eps, i)| {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let bound = anticoncentration_bound(*eps, norm).unwrap();
            empirical_small_ball(v, *eps, 20_000, 6000 + i) > bound + 0.01
        })
        .count();
    outcome(
        psd_fail == 0 && anti_fail == 0,
        format!("PSD coupling violations {psd_fail}/1000, anticoncentration violations {anti_fail}/1000"),
    )
}

/// Trials CSV with the wall-time column dropped.
fn data_columns(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} [{}] {name}: {} ({secs:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    run(1, "interpolation exactness", &mut interpolation_exactness);
    run(2, "kernel/primal equivalence", &mut kernel_primal_equivalence);
    run(3, "push-through identity", &mut push_through_identity);
    run(4, "worked regime example", &mut worked_example);

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let sweep = run_sweep(
        &validation_spec(),
        &SweepOptions {
            workers: Some(2),
            out_dir: Some(dir_a.path().to_path_buf()),
        },
    )
    .unwrap();
    let sweep_secs = t.elapsed().as_secs_f64();
    println!("validation sweep: {} trials in {sweep_secs:.1} s", sweep.rows.len());
    let records = sweep.summary.records.clone();
    run(5, "phase direction", &mut || phase_direction(&records));
    run(6, "strong converse trend", &mut || strong_converse(&records));
    run(7, "MNI vs averaging", &mut suboptimality);
    run(8, "survival/contamination exponents", &mut survival_exponents);
    run(9, "feature-label correlation bracket", &mut feature_label_bracket);
    run(10, "Z-correlation near 1/2", &mut z_correlation);
    run(11, "Hanson-Wright radius scaling", &mut radius_scaling);
    run(12, "orthant scaling", &mut orthant);
    run(13, "deterministic replay", &mut || {
        run_sweep(
            &validation_spec(),
            &SweepOptions {
                workers: Some(1),
                out_dir: Some(dir_b.path().to_path_buf()),
            },
        )
        .unwrap();
        let a = data_columns(&dir_a.path().join("trials.csv"));
        let b = data_columns(&dir_b.path().join("trials.csv"));
        outcome(
            a == b,
            format!("{} data rows, 2 vs 1 workers, identical = {}", a.lines().count() - 1, a == b),
        )
    });
    run(14, "PSD coupling and anticoncentration", &mut psd_and_anticoncentration);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "{} / {} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
