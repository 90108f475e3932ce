//! Config-driven front end: `esml <subcommand> --config <path> [--jobs N] [--out DIR]`.
//!
//! Exit status is 0 on success, 1 when the input is rejected and 2 when a
//! numerical result fails its own consistency check. Every failure also
//! leaves a machine-readable `error.json` in the output directory.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::Parser;
use esml_core::analysis::AnalysisError;
use esml_core::dist::DistError;
use esml_core::sim::SimError;
use serde::Serialize;

pub use config::{Command, ConfigError, ExperimentConfig, Violation};

#[derive(Debug, Parser)]
#[command(name = "esml", version, about = "Resampling (1,λ)-ES distance chain: simulation and analysis")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("self-checks failed: {}", .0.join("; "))]
    Checks(Vec<String>),
    #[error("internal: {0}")]
    Internal(String),
}

fn dist_code(e: &DistError) -> i32 {
    match e {
        DistError::Domain { .. } | DistError::InvalidParameter(_) | DistError::EmptyGrid => EXIT_INVALID,
        DistError::Singular { .. } | DistError::NoConvergence { .. } | DistError::Quadrature(_) => EXIT_NUMERIC,
    }
}

fn sim_code(e: &SimError) -> i32 {
    match e {
        SimError::InvalidConfig(_) => EXIT_INVALID,
        SimError::Dist(d) => dist_code(d),
        SimError::AtGeneration { source, .. } => sim_code(source),
        SimError::ResampleExhausted { .. } | SimError::EmptySelection | SimError::StepFactor { .. } => EXIT_NUMERIC,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => EXIT_INVALID,
            Self::Analysis(a) => match a {
                AnalysisError::LambdaTooSmall(_)
                | AnalysisError::NonPlanarNormal
                | AnalysisError::InvalidInput(_)
                | AnalysisError::SampleSize { .. } => EXIT_INVALID,
                AnalysisError::Dist(d) => dist_code(d),
                AnalysisError::Sim(s) => sim_code(s),
                AnalysisError::NumericInconsistency { .. }
                | AnalysisError::NoBetaFound { .. }
                | AnalysisError::InfiniteMoment { .. }
                | AnalysisError::Quadrature(_) => EXIT_NUMERIC,
            },
            Self::Sim(s) => sim_code(s),
            Self::Dist(d) => dist_code(d),
            Self::Checks(_) | Self::Internal(_) => EXIT_NUMERIC,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_INVALID => "validation",
            _ => "numeric-inconsistency",
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord {
    exit_code: i32,
    kind: &'static str,
    message: String,
    violations: Vec<Violation>,
    failed_checks: Vec<String>,
}

/// Parses, runs and writes artifacts; returns the process exit status.
pub fn execute(args: &Args) -> i32 {
    match run(args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(failure) => {
            let (err, provenance) = *failure;
            let code = err.exit_code();
            eprintln!("esml: {err}");
            let record = ErrorRecord {
                exit_code: code,
                kind: err.kind(),
                message: err.to_string(),
                violations: match &err {
                    CliError::Config(c) => c.violations(),
                    _ => vec![],
                },
                failed_checks: match &err {
                    CliError::Checks(c) => c.clone(),
                    _ => vec![],
                },
            };
            let written = output::render_json(provenance.as_ref(), &record)
                .map_err(std::io::Error::other)
                .and_then(|s| output::write_atomic(&args.out, "error.json", &s));
            if let Err(e) = written {
                eprintln!("esml: could not write error record: {e}");
            }
            code
        }
    }
}

type Failure = Box<(CliError, Option<output::Provenance>)>;

fn run(args: &Args) -> Result<Vec<PathBuf>, Failure> {
    let cfg = ExperimentConfig::from_path(&args.config, args.command).map_err(|e| Box::new((e.into(), None)))?;
    let provenance = output::Provenance::new(args.command, &cfg.hash, cfg.es.seed);
    let fail = |e: CliError| Box::new((e, Some(provenance.clone())));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        pool = pool.num_threads(j.into());
    }
    let pool = pool.build().map_err(|e| fail(CliError::Internal(e.to_string())))?;
    let outcome = pool.install(|| commands::run(&cfg, args.command)).map_err(fail)?;
    let mut files = Vec::new();
    for a in &outcome.artifacts {
        files.push(output::write_atomic(&args.out, &a.name, &a.contents).map_err(|e| fail(e.into()))?);
    }
    if !outcome.failed_checks.is_empty() {
        return Err(fail(CliError::Checks(outcome.failed_checks)));
    }
    Ok(files)
}
