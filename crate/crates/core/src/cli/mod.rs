//! Command-line entry point. [`dispatch`] parses argv, runs one subcommand
//! and maps the outcome to an exit code: 0 on success, 2 on usage or
//! validation errors, 1 on runtime failures.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use manifest::{config_digest, Manifest};

use crate::concentration::{HwTestConfig, OrthantConfig};
use crate::diagnostics::{diagnose, spectrum_report, FittedInstance};
use crate::ensemble::TrainingSet;
use crate::error::{Error, Result};
use crate::experiments::{
    compare_sweep, phase_diagram, read_trials_csv, aggregate, run_sweep, Axis, Classifier, PhaseSpec,
    SweepOptions, SweepSpec, TrialSpec, SIDECAR_JSON, TRIALS_CSV,
};
use crate::regimes::annotate;

#[derive(Debug, Parser)]
#[command(name = "mnilab", version, about = "Minimum-norm interpolation under the bi-level ensemble")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Replaces the seed (or base seed) in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One Monte Carlo trial: fit, score fresh test points, count errors.
    Trial,
    /// Sweep a parameter grid; writes trials.csv, sweep.json and a journal.
    Sweep,
    /// Survival, contamination, correlation and spectrum diagnostics of one instance.
    Diagnose,
    /// Eigenvalue report of the Gram matrix pieces of one instance.
    Spectrum,
    /// Closed-form regime verdicts for one exponent tuple.
    Regimes(RegimeArgs),
    /// Empirical bilinear Hanson-Wright tail as CSV.
    HwTest,
    /// Equicorrelated orthant probabilities and their slope in k.
    Orthant,
    /// Phase diagram SVG from a trials CSV.
    PhasePlot,
}

#[derive(Debug, Args)]
pub struct RegimeArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
}

/// Input of `phase-plot`. A relative `input` resolves against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePlotConfig {
    pub input: PathBuf,
    pub x: Axis,
    pub y: Axis,
    pub classifier: Classifier,
    #[serde(default)]
    pub n: Option<usize>,
}

/// Parses `argv` (including the program name) and runs it.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.common.verbose);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // A second dispatch in the same process keeps the first logger.
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

struct Config {
    path: PathBuf,
    text: String,
}

fn read_config(common: &CommonArgs) -> Result<Config> {
    let path = common
        .config
        .clone()
        .ok_or_else(|| Error::InvalidArgument("this subcommand needs --config <PATH>".into()))?;
    let text = fs::read_to_string(&path).map_err(|source| Error::File {
        path: path.clone(),
        source,
    })?;
    Ok(Config { path, text })
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Trial => "trial",
        Command::Sweep => "sweep",
        Command::Diagnose => "diagnose",
        Command::Spectrum => "spectrum",
        Command::Regimes(_) => "regimes",
        Command::HwTest => "hw-test",
        Command::Orthant => "orthant",
        Command::PhasePlot => "phase-plot",
    }
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    if common.workers == Some(0) {
        return Err(Error::InvalidArgument("--workers must be at least 1".into()));
    }
    let out = &common.out;
    if let Command::Regimes(args) = &cli.command {
        let ann = annotate(args.p, args.q, args.r, args.t)?;
        println!("{}", serde_json::to_string_pretty(&ann)?);
        return Ok(());
    }

    let config = read_config(common)?;
    let mut manifest = Manifest::start(command_name(&cli.command), &config.path, &config.text, common);
    let outputs: Vec<&str> = match &cli.command {
        Command::Trial => {
            let mut spec = TrialSpec::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let result = with_pool(common.workers, || spec.run())?;
            create_out(out)?;
            write_json(&out.join("trial.json"), &result)?;
            println!(
                "{} errors / {} test points (error rate {})",
                result.errors, result.test_points, result.error_rate
            );
            vec!["trial.json"]
        }
        Command::Diagnose => {
            let mut spec = TrialSpec::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let report = with_pool(common.workers, || diagnose(&spec.params(), spec.seed, spec.spectrum_cap()))?;
            create_out(out)?;
            write_json(&out.join("diagnostics.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report.pair)?);
            vec!["diagnostics.json"]
        }
        Command::Spectrum => {
            let mut spec = TrialSpec::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let report = with_pool(common.workers, || {
                let scaling = spec.params().derive()?;
                let inst = FittedInstance::new(TrainingSet::generate(&scaling, spec.seed))?;
                spectrum_report(&inst, spec.spectrum_cap())
            })?;
            create_out(out)?;
            write_json(&out.join("spectrum.json"), &report)?;
            vec!["spectrum.json"]
        }
        Command::Sweep => {
            let mut spec = SweepSpec::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                spec.base_seed = seed;
            }
            let options = SweepOptions {
                workers: common.workers,
                out_dir: Some(out.clone()),
            };
            let result = run_sweep(&spec, &options);
            let mut files = vec![TRIALS_CSV, SIDECAR_JSON, crate::experiments::JOURNAL];
            match result {
                Ok(output) => {
                    if spec.classifiers.contains(&Classifier::Mni) && spec.classifiers.contains(&Classifier::Averaging) {
                        let rows = compare_sweep(&output.summary.records)?;
                        write_json(&out.join("comparison.json"), &rows)?;
                        files.push("comparison.json");
                    }
                    println!(
                        "{} trials ({} resumed), {} records, {} skipped points",
                        output.rows.len(),
                        output.resumed,
                        output.summary.records.len(),
                        output.summary.skipped.len()
                    );
                    for s in &output.summary.skipped {
                        log::warn!("skipped {:?}: {}", s.point, s.reason);
                    }
                }
                Err(e @ Error::PartialFailure(_)) => {
                    manifest.finish(&files);
                    write_json(&out.join("manifest.json"), &manifest)?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
            files
        }
        Command::HwTest => {
            let mut cfg = HwTestConfig::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let report = with_pool(common.workers, || cfg.run())?;
            create_out(out)?;
            let path = out.join("tail.csv");
            let file = fs::File::create(&path).map_err(|source| Error::File { path, source })?;
            report.tail.write_csv(file)?;
            write_json(&out.join("hw-test.json"), &report)?;
            let mut stdout = Vec::new();
            report.tail.write_csv(&mut stdout)?;
            print!("{}", String::from_utf8_lossy(&stdout));
            vec!["tail.csv", "hw-test.json"]
        }
        Command::Orthant => {
            let mut cfg = OrthantConfig::from_json_str(&config.text)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let fit = with_pool(common.workers, || cfg.run())?;
            create_out(out)?;
            write_json(&out.join("orthant.json"), &fit)?;
            println!("slope {} over k = {:?}", fit.slope, fit.k_grid);
            vec!["orthant.json"]
        }
        Command::PhasePlot => {
            let cfg: PhasePlotConfig = serde_json::from_str(&config.text)?;
            let input = if cfg.input.is_relative() {
                config.path.parent().unwrap_or(Path::new("")).join(&cfg.input)
            } else {
                cfg.input.clone()
            };
            let records = aggregate(&read_trials_csv(&input)?)?;
            let diagram = phase_diagram(
                &records,
                &PhaseSpec {
                    x: cfg.x,
                    y: cfg.y,
                    classifier: cfg.classifier,
                    n: cfg.n,
                },
            )?;
            create_out(out)?;
            fs::write(out.join("phase.svg"), diagram.to_svg())?;
            write_json(&out.join("phase.json"), &diagram)?;
            vec!["phase.svg", "phase.json"]
        }
        Command::Regimes(_) => unreachable!("handled above"),
    };
    manifest.finish(&outputs);
    write_json(&out.join("manifest.json"), &manifest)
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}
