//! Experiment configuration files.
//!
//! A config is a JSON object. Every problem found is collected into one
//! list of [`Violation`]s so a user can fix the file in a single pass.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use clap::ValueEnum;
use esml_core::analysis::{DiagnoseSettings, QuadratureSpec};
use esml_core::constraint::{ConstraintError, ConstraintNormal};
use esml_core::dist::{Copula, Marginal1D, MovementDistribution};
use esml_core::sim::{EsConfig, StepSizeRule, DEFAULT_RESAMPLE_CAP};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Kernel,
    Drift,
    DeltaInf,
    ValidateCopula,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Kernel => "kernel",
            Self::Drift => "drift",
            Self::DeltaInf => "delta-inf",
            Self::ValidateCopula => "validate-copula",
            Self::Diagnose => "diagnose",
        }
    }

    /// Subcommands that evaluate the selection law and therefore need λ ≥ 2.
    pub fn is_analysis(self) -> bool {
        matches!(self, Self::Kernel | Self::Drift | Self::DeltaInf | Self::Diagnose)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
}

impl Violation {
    fn new(rule: &str, message: impl Into<String>) -> Self {
        Self { rule: rule.to_owned(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Gaussian { mean: f64, stddev: f64 },
    Laplace { location: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaSpec {
    Product,
    Gumbel { theta: f64 },
    Gaussian { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MovementSpec {
    BivariateGaussian { mean: [f64; 2], covariance: [[f64; 2]; 2] },
    Composed { first: MarginalSpec, second: MarginalSpec, copula: CopulaSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    /// Σ_t = σ in every generation.
    Constant { sigma: f64 },
    /// Σ_t = factor · Σ_{t−1}.
    Geometric { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub generations: usize,
    pub replicas: usize,
    pub track_x: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self { generations: 1000, replicas: 1, track_x: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub deltas: Vec<f64>,
    /// Target intervals (a, b); `null` for b means +∞.
    pub intervals: Vec<(f64, Option<f64>)>,
    pub eps: Vec<f64>,
    /// Points of the tabulated transition CDF per δ.
    pub cdf_points: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            deltas: vec![0.1, 1.0, 5.0],
            intervals: vec![(0.0, None), (1.0, None)],
            eps: vec![0.05, 1e-2, 1e-3, 1e-4],
            cdf_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl Default for DriftParams {
    fn default() -> Self {
        let s = DiagnoseSettings::default();
        Self { alphas: s.alphas, deltas: s.drift_deltas }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaInfParams {
    /// α values of the exponential-moment check.
    pub exp_alphas: Vec<f64>,
    pub beta: bool,
}

impl Default for DeltaInfParams {
    fn default() -> Self {
        Self { exp_alphas: vec![0.1, 0.5, 1.0], beta: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaParams {
    pub thetas: Vec<f64>,
    pub samples: usize,
    pub tau_tolerance: f64,
    pub sklar_probes: usize,
}

impl Default for CopulaParams {
    fn default() -> Self {
        Self { thetas: vec![1.0, 1.5, 2.0, 4.0], samples: 100_000, tau_tolerance: 0.02, sklar_probes: 20 }
    }
}

/// The file as written; every field optional so that all missing ones can
/// be reported together.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    format_version: Option<u32>,
    seed: Option<u64>,
    d: Option<usize>,
    lambda: Option<usize>,
    n: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
    sigma0: Option<f64>,
    step: Option<StepSpec>,
    movement: Option<MovementSpec>,
    tail: Option<MarginalSpec>,
    resample_cap: Option<u64>,
    #[serde(default)]
    quadrature: QuadratureSpec,
    #[serde(default)]
    simulate: SimulateParams,
    #[serde(default)]
    kernel: KernelParams,
    #[serde(default)]
    drift: DriftParams,
    #[serde(default)]
    delta_inf: DeltaInfParams,
    #[serde(default)]
    validate_copula: CopulaParams,
    #[serde(default)]
    diagnose: DiagnoseSettings,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Hex SHA-256 of the canonical (key-sorted, whitespace-free) JSON text.
    pub hash: String,
    pub es: EsConfig<f64>,
    pub movement_spec: MovementSpec,
    pub quadrature: QuadratureSpec,
    pub simulate: SimulateParams,
    pub kernel: KernelParams,
    pub drift: DriftParams,
    pub delta_inf: DeltaInfParams,
    pub validate_copula: CopulaParams,
    pub diagnose: DiagnoseSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            Self::Invalid(v) => v.clone(),
            Self::Syntax(m) => vec![Violation::new("syntax", m.clone())],
            Self::Read { .. } => Vec::new(),
        }
    }
}

pub fn canonical_hash(value: &Value) -> String {
    let text = serde_json::to_string(value).expect("JSON values serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn marginal(spec: MarginalSpec, what: &str, out: &mut Vec<Violation>) -> Option<Marginal1D<f64>> {
    let m = match spec {
        MarginalSpec::Gaussian { mean, stddev } => Marginal1D::gaussian(mean, stddev),
        MarginalSpec::Laplace { location, scale } => Marginal1D::laplace(location, scale),
    };
    m.map_err(|e| out.push(Violation::new("marginal-parameter", format!("{what}: {e}")))).ok()
}

pub fn build_copula(spec: CopulaSpec) -> Result<Copula<f64>, Violation> {
    match spec {
        CopulaSpec::Product => Ok(Copula::product()),
        CopulaSpec::Gumbel { theta } => Copula::gumbel(theta)
            .map_err(|_| Violation::new("gumbel-theta", format!("Gumbel theta must be >= 1 (got {theta})"))),
        CopulaSpec::Gaussian { rho } => Copula::gaussian(rho)
            .map_err(|_| Violation::new("gaussian-copula-rho", format!("rho must lie in (-1, 1) (got {rho})"))),
    }
}

fn movement(
    spec: MovementSpec,
    tail: Option<MarginalSpec>,
    out: &mut Vec<Violation>,
) -> Option<MovementDistribution<f64>> {
    let tail = match tail {
        Some(t) => Some(marginal(t, "tail", out)?),
        None => None,
    };
    let m = match spec {
        MovementSpec::BivariateGaussian { mean, covariance } => {
            MovementDistribution::bivariate_gaussian(mean, covariance)
                .map_err(|e| out.push(Violation::new("movement-covariance", e.to_string())))
                .ok()?
        }
        MovementSpec::Composed { first, second, copula } => {
            let f = marginal(first, "first marginal", out);
            let s = marginal(second, "second marginal", out);
            let c = build_copula(copula).map_err(|v| out.push(v)).ok();
            MovementDistribution::composed(f?, s?, c?)
                .map_err(|e| out.push(Violation::new("movement-distribution", e.to_string())))
                .ok()?
        }
    };
    Some(tail.map_or(m, |t| m.with_tail(t)))
}

fn normal_rule(e: &ConstraintError) -> &'static str {
    match e {
        ConstraintError::TooShort(_) => "constraint-normal-too-short",
        ConstraintError::Zero => "constraint-normal-zero",
        ConstraintError::NonFinite { .. } => "constraint-normal-non-finite",
        ConstraintError::Structure { .. } => "constraint-normal-structure",
    }
}

fn check_positive_list(rule: &str, what: &str, xs: &[f64], out: &mut Vec<Violation>) {
    if xs.is_empty() {
        out.push(Violation::new(rule, format!("{what} must not be empty")));
    }
    for x in xs {
        if !(*x > 0.0 && x.is_finite()) {
            out.push(Violation::new(rule, format!("{what} must be positive and finite (got {x})")));
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path, command: Command) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text, command)
    }

    /// Parses and validates a config for one subcommand.
    pub fn parse(text: &str, command: Command) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let raw: RawConfig = serde_json::from_value(value.clone()).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let hash = canonical_hash(&value);
        let mut out = Vec::new();

        let missing = |name: &str, out: &mut Vec<Violation>| {
            out.push(Violation::new("missing-field", format!("required field `{name}` is absent")))
        };
        macro_rules! required {
            ($field:ident) => {{
                if raw.$field.is_none() {
                    missing(stringify!($field), &mut out);
                }
                raw.$field.clone()
            }};
        }
        let version = required!(format_version);
        let seed = required!(seed);
        let d = required!(d);
        let lambda = required!(lambda);
        let n = required!(n);
        let x0 = required!(x0);
        let sigma0 = required!(sigma0);
        let step = required!(step);
        let movement_spec = required!(movement);

        if let Some(v) = version {
            if v != FORMAT_VERSION {
                out.push(Violation::new(
                    "format-version",
                    format!("expected format_version {FORMAT_VERSION} (got {v})"),
                ));
            }
        }
        let normal = n.as_ref().and_then(|n| {
            let errs = ConstraintNormal::violations(n);
            for e in &errs {
                out.push(Violation::new(normal_rule(e), e.to_string()));
            }
            if errs.is_empty() {
                Some(ConstraintNormal::new(n.clone()).expect("checked above"))
            } else {
                None
            }
        });
        let movement_law = movement_spec.and_then(|m| movement(m, raw.tail, &mut out));
        let step_rule = step.map(|s| match s {
            StepSpec::Constant { sigma } => StepSizeRule::Constant(sigma),
            StepSpec::Geometric { factor } => {
                if !(factor > 0.0 && factor.is_finite()) {
                    out.push(Violation::new(
                        "step-factor",
                        format!("factor must be positive and finite (got {factor})"),
                    ));
                }
                StepSizeRule::Custom(Arc::new(move |_: &[Vec<f64>]| factor))
            }
        });

        let es = match (seed, d, lambda, x0, sigma0, step_rule) {
            (Some(seed), Some(d), Some(lambda), Some(x0), Some(sigma0), Some(step)) => {
                // Placeholders let the remaining rules run when n or the
                // movement law is itself invalid; their own rules are skipped.
                let mut placeholder = vec![0.0; d.max(2)];
                placeholder[0] = 1.0;
                let real_n = normal.is_some();
                let real_m = movement_law.is_some();
                let es = EsConfig {
                    d,
                    lambda,
                    n: normal.clone().unwrap_or_else(|| ConstraintNormal::new(placeholder).expect("unit vector")),
                    movement: movement_law.unwrap_or_else(MovementDistribution::standard_gaussian),
                    step,
                    x0,
                    sigma0,
                    resample_cap: raw.resample_cap.unwrap_or(DEFAULT_RESAMPLE_CAP),
                    seed,
                };
                for v in es.violations() {
                    let depends_on_n = matches!(v.rule, "normal-dimension" | "initial-feasibility");
                    if (real_n || !depends_on_n) && (real_m || v.rule != "movement-distribution") {
                        out.push(Violation::new(v.rule, v.message));
                    }
                }
                (real_n && real_m).then_some(es)
            }
            _ => None,
        };

        if let Err(e) = raw.quadrature.validate() {
            out.push(Violation::new("quadrature-tolerance", e.to_string()));
        }
        out.extend(command_violations(command, &raw, es.as_ref()));

        match es {
            Some(es) if out.is_empty() => Ok(Self {
                hash,
                es,
                movement_spec: movement_spec.expect("present when es is built"),
                quadrature: raw.quadrature,
                simulate: raw.simulate,
                kernel: raw.kernel,
                drift: raw.drift,
                delta_inf: raw.delta_inf,
                validate_copula: raw.validate_copula,
                diagnose: raw.diagnose,
            }),
            _ => Err(ConfigError::Invalid(out)),
        }
    }
}

fn command_violations(command: Command, raw: &RawConfig, es: Option<&EsConfig<f64>>) -> Vec<Violation> {
    let mut out = Vec::new();
    if command.is_analysis() {
        if let Some(l) = raw.lambda {
            if l < 2 {
                out.push(Violation::new(
                    "analysis-requires-lambda-2",
                    format!("{} needs lambda >= 2 (got {l})", command.name()),
                ));
            }
        }
        if let Some(es) = es {
            if es.n.planar().is_none() {
                out.push(Violation::new(
                    "analysis-requires-planar-normal",
                    format!("{} needs n supported on the first two coordinates", command.name()),
                ));
            }
        }
    }
    match command {
        Command::Simulate => {
            let s = &raw.simulate;
            if s.generations == 0 || s.replicas == 0 {
                out.push(Violation::new("simulate-size", "generations and replicas must be >= 1"));
            }
        }
        Command::Kernel => {
            let k = &raw.kernel;
            check_positive_list("kernel-deltas", "kernel.deltas", &k.deltas, &mut out);
            for &(a, b) in &k.intervals {
                if !(a >= 0.0 && a.is_finite() && b.is_none_or(|b| b > a)) {
                    out.push(Violation::new("kernel-interval", format!("interval ({a}, {b:?}) needs 0 <= a < b")));
                }
            }
            let smallest = k.deltas.iter().copied().fold(f64::INFINITY, f64::min);
            for &e in &k.eps {
                if !(e > 0.0 && e < smallest) {
                    out.push(Violation::new(
                        "kernel-probe-eps",
                        format!("probe eps {e} must lie in (0, min delta = {smallest})"),
                    ));
                }
            }
            if k.cdf_points < 2 {
                out.push(Violation::new("kernel-cdf-points", "cdf_points must be >= 2"));
            }
        }
        Command::Drift => {
            check_positive_list("drift-alphas", "drift.alphas", &raw.drift.alphas, &mut out);
            check_positive_list("drift-deltas", "drift.deltas", &raw.drift.deltas, &mut out);
        }
        Command::DeltaInf => {
            for &a in &raw.delta_inf.exp_alphas {
                if !(a > 0.0 && a.is_finite()) {
                    out.push(Violation::new("exp-moment-alpha", format!("alpha must be positive (got {a})")));
                }
            }
        }
        Command::ValidateCopula => {
            let c = &raw.validate_copula;
            if c.thetas.is_empty() {
                out.push(Violation::new("gumbel-theta", "validate_copula.thetas must not be empty"));
            }
            for &t in &c.thetas {
                if !(t >= 1.0 && t.is_finite()) {
                    out.push(Violation::new("gumbel-theta", format!("Gumbel theta must be >= 1 (got {t})")));
                }
            }
            if c.samples < 2 || c.sklar_probes < 1 {
                out.push(Violation::new("copula-sample-size", "samples must be >= 2 and sklar_probes >= 1"));
            }
        }
        Command::Diagnose => {
            let g = &raw.diagnose;
            check_positive_list("drift-alphas", "diagnose.alphas", &g.alphas, &mut out);
            check_positive_list("drift-deltas", "diagnose.drift_deltas", &g.drift_deltas, &mut out);
            check_positive_list("kernel-deltas", "diagnose.kernel_deltas", &g.kernel_deltas, &mut out);
            if matches!(raw.step, Some(StepSpec::Geometric { .. })) {
                out.push(Violation::new(
                    "diagnose-requires-constant-step",
                    "diagnose analyses constant step sizes only",
                ));
            }
            let e = &g.ergodicity;
            if g.replicas < e.min_per_slice {
                out.push(Violation::new(
                    "ergodicity-sample-size",
                    format!("diagnose.replicas must be >= {} (got {})", e.min_per_slice, g.replicas),
                ));
            }
            if !(e.window >= 1 && e.window <= e.early_end && e.early_end < e.late_end && e.late_end <= g.generations) {
                out.push(Violation::new(
                    "ergodicity-windows",
                    "need 1 <= window <= early_end < late_end <= generations",
                ));
            }
        }
    }
    out
}
