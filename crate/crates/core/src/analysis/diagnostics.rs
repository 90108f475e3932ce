//! Statistical proxies for geometric ergodicity of the distance chain.

use serde::{Deserialize, Serialize};

use super::moments::{delta_infinity, drift_curve, find_beta, DeltaInfinity, DriftPoint};
use super::selection::SelectionLaw;
use super::{check_lambda, AnalysisError, QuadratureSpec};
use crate::rng::STREAM_DERIVATION;
use crate::sim::{run_distances, EsConfig, StepSizeRule};
use crate::stats::ks_two_sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicitySettings {
    /// α of the test function V_α(δ) = exp(αδ).
    pub alpha: f64,
    /// The two late time points compared; each window ends at its point.
    pub early_end: usize,
    pub late_end: usize,
    /// Generations pooled per window; 1 compares single time slices.
    pub window: usize,
    pub min_per_slice: usize,
    pub ks_threshold: f64,
    pub z_threshold: f64,
}

impl Default for ErgodicitySettings {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            early_end: 1000,
            late_end: 2000,
            window: 500,
            min_per_slice: 1000,
            ks_threshold: 0.02,
            z_threshold: 3.0,
        }
    }
}

/// Least-squares fit of |E V_α(D_t) − tail mean| ≈ C ρ^t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Long-run mean of D in two disjoint groups of replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossReplica {
    pub mean_a: f64,
    pub stderr_a: f64,
    pub mean_b: f64,
    pub stderr_b: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityStats {
    pub replicas: usize,
    pub generations: usize,
    /// KS distance between the pooled windows ending at the two time points.
    pub ks_windows: f64,
    /// KS distance between the two single time slices.
    pub ks_slices: f64,
    pub tail_mean_v: f64,
    pub rate_fit: Option<RateFit>,
    pub cross_replica: CrossReplica,
    pub convergent: bool,
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn fit_rate(ts: &[f64], ys: &[f64]) -> Option<RateFit> {
    if ts.len() < 3 {
        return None;
    }
    let n = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(RateFit { rate: slope.exp(), r_squared: r2, points: ts.len() })
}

/// Convergence proxies on distance paths `paths[r][t − 1] = D_t`.
pub fn ergodicity_diagnostics(
    paths: &[Vec<f64>],
    settings: &ErgodicitySettings,
) -> Result<ErgodicityStats, AnalysisError> {
    let s = settings;
    if paths.len() < s.min_per_slice {
        return Err(AnalysisError::SampleSize { needed: s.min_per_slice, got: paths.len() });
    }
    let generations = paths.iter().map(Vec::len).min().unwrap_or(0);
    if !(s.window >= 1 && s.window <= s.early_end && s.early_end < s.late_end && s.late_end <= generations) {
        return Err(AnalysisError::InvalidInput(format!(
            "windows of {} ending at t = {} and {} need paths of that length (got {generations})",
            s.window, s.early_end, s.late_end
        )));
    }
    let pooled =
        |end: usize| -> Vec<f64> { paths.iter().flat_map(|p| p[end - s.window..end].iter().copied()).collect() };
    let slice = |t: usize| -> Vec<f64> { paths.iter().map(|p| p[t - 1]).collect() };
    let ks_windows = ks_two_sample(&pooled(s.early_end), &pooled(s.late_end));
    let ks_slices = ks_two_sample(&slice(s.early_end), &slice(s.late_end));

    let stats: Vec<(f64, f64)> =
        (0..generations).map(|t| mean_se(paths.iter().map(|p| (s.alpha * p[t]).exp()))).collect();
    let half = generations / 2;
    let tail = stats[half..].iter().map(|v| v.0).sum::<f64>() / (generations - half) as f64;
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for (t, &(m, se)) in stats.iter().enumerate() {
        let gap = (m - tail).abs();
        if !(gap > 3.0 * se) {
            break;
        }
        ts.push((t + 1) as f64);
        ys.push(gap.ln());
    }
    let rate_fit = fit_rate(&ts, &ys);

    let long_run: Vec<f64> =
        paths.iter().map(|p| p[half..generations].iter().sum::<f64>() / (generations - half) as f64).collect();
    let split = long_run.len() / 2;
    let (mean_a, stderr_a) = mean_se(long_run[..split].iter().copied());
    let (mean_b, stderr_b) = mean_se(long_run[split..].iter().copied());
    let z = (mean_a - mean_b).abs() / (stderr_a * stderr_a + stderr_b * stderr_b).sqrt();
    let cross_replica = CrossReplica { mean_a, stderr_a, mean_b, stderr_b, z };

    let convergent = ks_windows < s.ks_threshold && z < s.z_threshold && rate_fit.is_none_or(|f| f.rate < 1.0);
    Ok(ErgodicityStats {
        replicas: paths.len(),
        generations,
        ks_windows,
        ks_slices,
        tail_mean_v: tail,
        rate_fit,
        cross_replica,
        convergent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSettings {
    pub generations: usize,
    pub replicas: usize,
    pub alphas: Vec<f64>,
    pub drift_deltas: Vec<f64>,
    pub kernel_deltas: Vec<f64>,
    pub ergodicity: ErgodicitySettings,
}

impl Default for DiagnoseSettings {
    fn default() -> Self {
        Self {
            generations: 2000,
            replicas: 1000,
            alphas: vec![0.01, 0.05, 0.1, 0.2],
            drift_deltas: (0..20).map(|i| 2.0 + 8.0 * i as f64 / 19.0).collect(),
            kernel_deltas: vec![0.1, 1.0, 5.0],
            ergodicity: ErgodicitySettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub seed: u64,
    pub stream_derivation: &'static str,
    pub quadrature: QuadratureSpec,
    pub settings: DiagnoseSettings,
    pub delta_infinity: DeltaInfinity,
    /// None when the gain never settles in its bracket.
    pub beta: Option<f64>,
    pub drift_curve: Vec<DriftPoint>,
    /// Largest tested α whose drift is negative on the upper half of the grid.
    pub largest_negative_alpha: Option<f64>,
    /// max over the kernel grid of |P(δ, (0, ∞)) − 1|.
    pub kernel_mass_error: f64,
    pub ks_stationarity: f64,
    pub geometric_rate_fit: Option<RateFit>,
    pub ergodicity: ErgodicityStats,
    pub convergent: bool,
}

/// Every analytic object plus simulated convergence proxies for one
/// constant-step configuration.
pub fn diagnose(
    cfg: &EsConfig<f64>,
    settings: &DiagnoseSettings,
    spec: &QuadratureSpec,
) -> Result<DiagnosticsReport, AnalysisError> {
    check_lambda(cfg.lambda)?;
    if !matches!(cfg.step, StepSizeRule::Constant(_)) {
        return Err(AnalysisError::InvalidInput("diagnostics need a constant step size".into()));
    }
    cfg.validate()?;
    let (m, n, lambda) = (&cfg.movement, &cfg.n, cfg.lambda);
    let di = delta_infinity(m, n, lambda, spec)?;
    let beta = match find_beta(m, n, lambda, spec) {
        Ok(b) => Some(b.beta),
        Err(AnalysisError::NoBetaFound { .. }) => None,
        Err(e) => return Err(e),
    };
    let drift = drift_curve(m, n, lambda, &settings.alphas, &settings.drift_deltas, spec)?;
    let upper = {
        let mut d = settings.drift_deltas.clone();
        d.sort_by(f64::total_cmp);
        d.get(d.len() / 2).copied().unwrap_or(f64::INFINITY)
    };
    let largest_negative_alpha = settings
        .alphas
        .iter()
        .copied()
        .filter(|&a| drift.iter().filter(|p| p.alpha == a && p.delta >= upper).all(|p| p.ratio < 0.0))
        .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))));
    let tol = spec.tolerance();
    let mut kernel_mass_error: f64 = 0.0;
    for &d in &settings.kernel_deltas {
        let p = SelectionLaw::new(m, n, lambda, d, &tol)?.transition_prob(0.0, f64::INFINITY)?;
        kernel_mass_error = kernel_mass_error.max((p - 1.0).abs());
    }
    let paths = run_distances(cfg, settings.generations, settings.replicas)?;
    let ergodicity = ergodicity_diagnostics(&paths, &settings.ergodicity)?;
    Ok(DiagnosticsReport {
        seed: cfg.seed,
        stream_derivation: STREAM_DERIVATION,
        quadrature: *spec,
        settings: settings.clone(),
        delta_infinity: di,
        beta,
        drift_curve: drift,
        largest_negative_alpha,
        kernel_mass_error,
        ks_stationarity: ergodicity.ks_windows,
        geometric_rate_fit: ergodicity.rate_fit,
        convergent: ergodicity.convergent,
        ergodicity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::ConstraintNormal;
    use crate::dist::MovementDistribution;

    fn config(mean: [f64; 2], seed: u64) -> EsConfig<f64> {
        let m = MovementDistribution::bivariate_gaussian(mean, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let n = ConstraintNormal::new(vec![1.0, 0.0]).unwrap();
        EsConfig::constant(2, 2, n, m, 1.0, vec![-1.0, 0.0], seed)
    }

    #[test]
    fn stationary_chain_is_convergent() {
        let paths = run_distances(&config([0.0, 0.0], 7), 2000, 1000).unwrap();
        let stats = ergodicity_diagnostics(&paths, &ErgodicitySettings::default()).unwrap();
        assert!(stats.ks_windows < 0.02, "{stats:?}");
        assert!(stats.cross_replica.z < 3.0, "{stats:?}");
        assert!(stats.convergent, "{stats:?}");
    }

    #[test]
    fn drifting_chain_is_flagged() {
        let paths = run_distances(&config([-1.0, 0.0], 7), 2000, 1000).unwrap();
        let stats = ergodicity_diagnostics(&paths, &ErgodicitySettings::default()).unwrap();
        assert!(!stats.convergent, "{stats:?}");
        assert!(stats.ks_windows > 0.5);
    }

    #[test]
    fn too_few_replicas() {
        let paths = run_distances(&config([0.0, 0.0], 1), 50, 10).unwrap();
        let s = ErgodicitySettings { early_end: 20, late_end: 40, window: 10, ..Default::default() };
        assert_eq!(ergodicity_diagnostics(&paths, &s), Err(AnalysisError::SampleSize { needed: 1000, got: 10 }));
    }

    #[test]
    fn rate_fit_recovers_geometric_decay() {
        let ts: Vec<f64> = (1..=20).map(|t| t as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (3.0 * 0.8f64.powf(*t)).ln()).collect();
        let f = fit_rate(&ts, &ys).unwrap();
        assert!((f.rate - 0.8).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit_rate(&ts[..2], &ys[..2]), None);
    }
}
