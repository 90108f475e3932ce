//! One function per subcommand. Each returns the artifacts to write and the
//! names of any self-checks that failed.

use esml_core::analysis::{
    delta_infinity, diagnose, drift_curve, exp_moment, find_beta, kernel_continuity_probe, AnalysisError,
    ContinuityRow, DeltaInfinity, SelectionLaw,
};
use esml_core::dist::{
    check_copula, sklar_round_trip, Copula, CopulaReport, DensityVariant, Marginal1D, MovementDistribution,
    MovementKind, SklarReport,
};
use esml_core::rng::derive_seed;
use esml_core::sim::run_chain;
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::output::{fmt_f64, render_json, Provenance, Table};
use crate::CliError;

pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub failed_checks: Vec<String>,
}

impl Outcome {
    fn json<T: Serialize>(&mut self, name: &str, p: &Provenance, result: &T) -> Result<(), CliError> {
        let contents = render_json(Some(p), result).map_err(|e| CliError::Internal(e.to_string()))?;
        self.artifacts.push(Artifact { name: name.into(), contents });
        Ok(())
    }

    fn csv(&mut self, name: &str, p: &Provenance, table: &Table, extra: &[(&str, String)]) {
        self.artifacts.push(Artifact { name: name.into(), contents: table.render(p, extra) });
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failed_checks.push(what());
        }
    }
}

pub fn run(cfg: &ExperimentConfig, command: Command) -> Result<Outcome, CliError> {
    let p = Provenance::new(command, &cfg.hash, cfg.es.seed);
    let mut out = Outcome::default();
    match command {
        Command::Simulate => simulate(cfg, &p, &mut out)?,
        Command::Kernel => kernel(cfg, &p, &mut out)?,
        Command::Drift => drift(cfg, &p, &mut out)?,
        Command::DeltaInf => delta_inf(cfg, &p, &mut out)?,
        Command::ValidateCopula => validate_copula(cfg, &p, &mut out)?,
        Command::Diagnose => {
            let report = diagnose(&cfg.es, &cfg.diagnose, &cfg.quadrature)?;
            out.json("diagnose.json", &p, &report)?;
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ReplicaSummary {
    replica: usize,
    stream_seed: u64,
    file: String,
    final_distance: f64,
    total_draws: u64,
}

#[derive(Serialize)]
struct SimulateSummary {
    generations: usize,
    replicas: usize,
    track_x: bool,
    traces: Vec<ReplicaSummary>,
}

fn simulate(cfg: &ExperimentConfig, p: &Provenance, out: &mut Outcome) -> Result<(), CliError> {
    let s = &cfg.simulate;
    let traces = run_chain(&cfg.es, s.generations, s.replicas, s.track_x)?;
    let mut header: Vec<String> = ["t", "D", "Sigma", "i_t", "j_total", "n_dot_move"].map(String::from).to_vec();
    if s.track_x {
        header.extend((1..=cfg.es.d).map(|k| format!("x{k}")));
    }
    let mut summary =
        SimulateSummary { generations: s.generations, replicas: s.replicas, track_x: s.track_x, traces: vec![] };
    for trace in &traces {
        let mut table = Table::new(header.clone());
        for r in &trace.records {
            let mut row = vec![
                r.t.to_string(),
                fmt_f64(r.distance),
                fmt_f64(r.sigma),
                r.selected.to_string(),
                r.total_attempts().to_string(),
                fmt_f64(r.n_dot_move),
            ];
            if let Some(x) = &r.x {
                row.extend(x.iter().map(|v| fmt_f64(*v)));
            }
            table.push(row);
        }
        let file = format!("trace_{:03}.csv", trace.replica);
        out.csv(
            &file,
            p,
            &table,
            &[("replica", trace.replica.to_string()), ("stream_seed", trace.stream_seed.to_string())],
        );
        let last = trace.records.last();
        summary.traces.push(ReplicaSummary {
            replica: trace.replica,
            stream_seed: trace.stream_seed,
            file,
            final_distance: last.map_or(f64::NAN, |r| r.distance - r.n_dot_move),
            total_draws: trace.records.iter().map(|r| r.total_attempts()).sum(),
        });
    }
    out.json("simulate.json", p, &summary)
}

#[derive(Serialize)]
struct IntervalProb {
    a: f64,
    b: Option<f64>,
    probability: f64,
    continuity: Vec<ContinuityRow>,
}

#[derive(Serialize)]
struct KernelAt {
    delta: f64,
    mass: f64,
    mean_gain: f64,
    intervals: Vec<IntervalProb>,
}

fn kernel(cfg: &ExperimentConfig, p: &Provenance, out: &mut Outcome) -> Result<(), CliError> {
    let (m, n, lambda) = (&cfg.es.movement, &cfg.es.n, cfg.es.lambda);
    let k = &cfg.kernel;
    let tol = cfg.quadrature.tolerance();
    let mass_tol = (100.0 * cfg.quadrature.abs_tol).max(1e-6);
    let mut rows = Vec::new();
    let mut cdf = Table::new(["delta", "y", "cdf"]);
    for &delta in &k.deltas {
        let law = SelectionLaw::new(m, n, lambda, delta, &tol)?;
        let mass = law.transition_prob(0.0, f64::INFINITY)?;
        out.check((mass - 1.0).abs() <= mass_tol, || format!("kernel mass at delta {delta} is {mass}"));
        let mut intervals = Vec::new();
        for &(a, b) in &k.intervals {
            let hi = b.unwrap_or(f64::INFINITY);
            intervals.push(IntervalProb {
                a,
                b,
                probability: law.transition_prob(a, hi)?,
                continuity: kernel_continuity_probe(m, n, lambda, delta, (a, hi), &k.eps, &tol)?,
            });
        }
        let top = delta + 6.0;
        for i in 1..=k.cdf_points {
            let y = top * i as f64 / k.cdf_points as f64;
            cdf.push(vec![fmt_f64(delta), fmt_f64(y), fmt_f64(law.transition_prob(0.0, y)?)]);
        }
        rows.push(KernelAt { delta, mass, mean_gain: law.conditional_gain()?, intervals });
    }
    out.json("kernel.json", p, &rows)?;
    out.csv("kernel_cdf.csv", p, &cdf, &[]);
    Ok(())
}

#[derive(Serialize)]
struct AlphaSummary {
    alpha: f64,
    max_ratio: f64,
    negative_everywhere: bool,
}

fn drift(cfg: &ExperimentConfig, p: &Provenance, out: &mut Outcome) -> Result<(), CliError> {
    let d = &cfg.drift;
    let curve = drift_curve(&cfg.es.movement, &cfg.es.n, cfg.es.lambda, &d.alphas, &d.deltas, &cfg.quadrature)?;
    let mut table = Table::new(["alpha", "delta", "value", "ratio", "mc_ratio", "mc_stderr"]);
    for c in &curve {
        table.push([c.alpha, c.delta, c.value, c.ratio, c.mc_ratio, c.mc_stderr].map(fmt_f64).to_vec());
    }
    let summary: Vec<AlphaSummary> = d
        .alphas
        .iter()
        .map(|&alpha| {
            let max_ratio =
                curve.iter().filter(|c| c.alpha == alpha).map(|c| c.ratio).fold(f64::NEG_INFINITY, f64::max);
            AlphaSummary { alpha, max_ratio, negative_everywhere: max_ratio < 0.0 }
        })
        .collect();
    out.json("drift.json", p, &serde_json::json!({ "summary": summary, "curve": curve }))?;
    out.csv("drift.csv", p, &table, &[]);
    Ok(())
}

#[derive(Serialize)]
struct MomentRow {
    alpha: f64,
    finite: bool,
    value: Option<f64>,
    squares: Vec<(f64, f64)>,
    /// Shell ratio at which divergence was declared.
    divergence_ratio: Option<f64>,
}

#[derive(Serialize)]
struct DeltaInfReport {
    delta_infinity: DeltaInfinity,
    exp_moments: Vec<MomentRow>,
    beta: Option<f64>,
    beta_bracket: Option<(f64, f64)>,
    beta_probe: Vec<(f64, f64)>,
    beta_error: Option<String>,
}

fn delta_inf(cfg: &ExperimentConfig, p: &Provenance, out: &mut Outcome) -> Result<(), CliError> {
    let (m, n, lambda) = (&cfg.es.movement, &cfg.es.n, cfg.es.lambda);
    let di = delta_infinity(m, n, lambda, &cfg.quadrature)?;
    let tol = cfg.quadrature.tolerance();
    let mut exp_moments = Vec::new();
    for &alpha in &cfg.delta_inf.exp_alphas {
        exp_moments.push(match exp_moment(m, n, alpha, &tol) {
            Ok(e) => {
                MomentRow { alpha, finite: true, value: Some(e.value), squares: e.squares, divergence_ratio: None }
            }
            Err(AnalysisError::InfiniteMoment { ratio, .. }) => {
                MomentRow { alpha, finite: false, value: None, squares: vec![], divergence_ratio: Some(ratio) }
            }
            Err(e) => return Err(e.into()),
        });
    }
    let mut report = DeltaInfReport {
        delta_infinity: di,
        exp_moments,
        beta: None,
        beta_bracket: None,
        beta_probe: vec![],
        beta_error: None,
    };
    let mut gains = Table::new(["delta", "gain"]);
    if cfg.delta_inf.beta {
        match find_beta(m, n, lambda, &cfg.quadrature) {
            Ok(b) => {
                for (d, g) in b.grid.iter().zip(&b.gains) {
                    gains.push(vec![fmt_f64(*d), fmt_f64(*g)]);
                }
                report.beta = Some(b.beta);
                report.beta_bracket = Some(b.bracket);
                report.beta_probe = b.probe;
            }
            Err(e @ AnalysisError::NoBetaFound { .. }) => report.beta_error = Some(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    out.json("delta_inf.json", p, &report)?;
    if !gains.rows.is_empty() {
        out.csv("delta_inf_gain.csv", p, &gains, &[]);
    }
    Ok(())
}

#[derive(Serialize)]
struct VariantRow {
    variant: &'static str,
    max_abs: f64,
    max_rel: f64,
}

#[derive(Serialize)]
struct ThetaReport {
    theta: f64,
    checks: CopulaReport,
    density_variants: Vec<VariantRow>,
}

#[derive(Serialize)]
struct CopulaValidation {
    gumbel: Vec<ThetaReport>,
    config_copula: Option<CopulaReport>,
    sklar_movement: &'static str,
    sklar: SklarReport,
    failed_checks: Vec<String>,
}

fn copula_checks(r: &CopulaReport, tau_tol: f64, label: &str, out: &mut Outcome) {
    out.check((r.density_mass - 1.0).abs() <= 1e-6, || format!("{label}: density mass {}", r.density_mass));
    out.check(r.fd_max_rel_error < 1e-4, || format!("{label}: finite-difference error {}", r.fd_max_rel_error));
    out.check((r.tau_empirical - r.tau_quadrature).abs() <= tau_tol, || {
        format!("{label}: empirical tau {} vs quadrature {}", r.tau_empirical, r.tau_quadrature)
    });
    out.check(r.monotone.iter().all(|m| m.1), || format!("{label}: generator monotonicity {:?}", r.monotone));
}

fn validate_copula(cfg: &ExperimentConfig, p: &Provenance, out: &mut Outcome) -> Result<(), CliError> {
    let c = &cfg.validate_copula;
    let tol = cfg.quadrature.tolerance();
    let mut gumbel = Vec::new();
    for (i, &theta) in c.thetas.iter().enumerate() {
        let copula = Copula::gumbel(theta)?;
        let checks = check_copula(&copula, c.samples, derive_seed(cfg.es.seed, i as u64), &tol)?;
        let label = format!("gumbel theta {theta}");
        copula_checks(&checks, c.tau_tolerance, &label, out);
        if theta == 1.0 {
            out.check(checks.product_deviation <= 1e-14, || {
                format!("{label}: product deviation {}", checks.product_deviation)
            });
        }
        let Copula::Archimedean(g) = copula else { unreachable!("gumbel is archimedean") };
        let density_variants =
            [(DensityVariant::GeneratorRatio, "generator_ratio"), (DensityVariant::GumbelExpanded, "gumbel_expanded")]
                .into_iter()
                .map(|(v, name)| {
                    let d = g.density_deviation(v, 9);
                    VariantRow { variant: name, max_abs: d.max_abs, max_rel: d.max_rel }
                })
                .collect();
        gumbel.push(ThetaReport { theta, checks, density_variants });
    }
    let (sklar_movement, movement, config_copula) = match cfg.es.movement.kind {
        MovementKind::Composed { copula, .. } => {
            let r = check_copula(&copula, c.samples, derive_seed(cfg.es.seed, c.thetas.len() as u64), &tol)?;
            copula_checks(&r, c.tau_tolerance, "config copula", out);
            ("config", cfg.es.movement, Some(r))
        }
        MovementKind::BivariateGaussian { .. } => {
            let normal = Marginal1D::standard_normal();
            (
                "composed(normal, normal, gumbel 2)",
                MovementDistribution::composed(normal, normal, Copula::gumbel(2.0)?)?,
                None,
            )
        }
    };
    let probes: Vec<f64> = (0..c.sklar_probes)
        .map(|i| if c.sklar_probes == 1 { 0.0 } else { -3.0 + 6.0 * i as f64 / (c.sklar_probes - 1) as f64 })
        .collect();
    let sklar = sklar_round_trip(&movement, &probes, &tol)?;
    out.check(sklar.first_marginal_error.max(sklar.second_marginal_error) <= 1e-8, || {
        format!("sklar marginal error {} / {}", sklar.first_marginal_error, sklar.second_marginal_error)
    });
    let report =
        CopulaValidation { gumbel, config_copula, sklar_movement, sklar, failed_checks: out.failed_checks.clone() };
    out.json("validate_copula.json", p, &report)
}
