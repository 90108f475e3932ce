use rayon::prelude::*;
use serde::Serialize;

use super::selection::{interior, sample_selected_movement, SelectionLaw};
use super::{check_lambda, check_positive, AnalysisError, QuadratureSpec};
use crate::constraint::ConstraintNormal;
use crate::dist::MovementDistribution;
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::rng::stream;
use crate::sim::DEFAULT_RESAMPLE_CAP;
use crate::Scalar;

/// Monte-Carlo work is split into this many fixed streams, so the estimate
/// does not depend on the thread count.
const MC_CHUNKS: usize = 64;
/// Two-sided 99% normal quantile.
const Z99: f64 = 2.5758293035489004;

/// Half-widths of the squares [−k, k]² used by the divergence test.
pub const EXP_MOMENT_SHELLS: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaInfinity {
    pub lambda: usize,
    /// Quadrature value of ∫ nᵀx H₁(x₁)^{λ−1} h(x) dx.
    pub estimate: f64,
    pub monte_carlo: f64,
    /// 99% half-width of the Monte-Carlo estimate.
    pub ci_halfwidth: f64,
    pub mc_samples: usize,
    /// Large-threshold limit λ·δ_∞ of the expected gain ∫ nᵀx h*_δ.
    pub gain_limit: f64,
}

fn planar<T: Scalar>(n: &ConstraintNormal<T>) -> Result<[T; 2], AnalysisError> {
    n.planar().ok_or(AnalysisError::NonPlanarNormal)
}

/// Sum and sum of squares per fixed stream, folded in stream order.
fn monte_carlo<F>(spec: &QuadratureSpec, width: usize, draw: F) -> Result<(Vec<f64>, Vec<f64>, usize), AnalysisError>
where
    F: Fn(&mut crate::rng::StreamRng, &mut [f64]) -> Result<(), AnalysisError> + Sync,
{
    let per = spec.mc_samples.div_ceil(MC_CHUNKS).max(1);
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(spec.mc_seed, c as u64);
            let (mut s, mut q) = (vec![0.0; width], vec![0.0; width]);
            let mut v = vec![0.0; width];
            for _ in 0..per {
                draw(&mut rng, &mut v)?;
                for k in 0..width {
                    s[k] += v[k];
                    q[k] += v[k] * v[k];
                }
            }
            Ok((s, q))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let (mut s, mut q) = (vec![0.0; width], vec![0.0; width]);
    for (cs, cq) in chunks {
        for k in 0..width {
            s[k] += cs[k];
            q[k] += cq[k];
        }
    }
    Ok((s, q, per * MC_CHUNKS))
}

fn mean_se(sum: f64, sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let m = sum / nf;
    let var = ((sq - nf * m * m) / (nf - 1.0)).max(0.0);
    (m, (var / nf).sqrt())
}

pub(crate) fn delta_infinity_quadrature<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    tol: &Tolerance<T>,
) -> Result<T, AnalysisError> {
    check_lambda(lambda)?;
    let [n1, n2] = planar(n)?;
    let first = movement.first_marginal();
    let failure = std::cell::RefCell::new(None);
    let lit = T::lit;
    let est = integrate_with_breaks(
        |p: T| {
            let p = interior(p);
            let w = p.powi(lambda as i32 - 1);
            let mut s = if n1 == T::zero() { T::zero() } else { n1 * first.quantile(p) };
            if n2 != T::zero() {
                match movement.conditional_at_level(p).mean(tol) {
                    Ok(m) => s = s + n2 * m,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                    }
                }
            }
            w * s
        },
        &[lit(0.0), lit(0.5), lit(1.0)],
        tol,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(est.value)
}

/// δ_∞ = ∫ nᵀx H₁(x₁)^{λ−1} h(x) dx by quadrature, confirmed by Monte Carlo.
pub fn delta_infinity<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    spec: &QuadratureSpec,
) -> Result<DeltaInfinity, AnalysisError> {
    spec.validate()?;
    let estimate = delta_infinity_quadrature(movement, n, lambda, &spec.tolerance())?.to_f64_lossy();
    let [n1, n2] = planar(n)?;
    let first = movement.first_marginal();
    let (sum, sq, count) = monte_carlo(spec, 1, |rng, out| {
        let mut x = [T::zero(); 2];
        movement.sample_into(rng, &mut x)?;
        let s = n1 * x[0] + n2 * x[1];
        out[0] = (s * first.cdf(x[0]).powi(lambda as i32 - 1)).to_f64_lossy();
        Ok(())
    })?;
    let (mc, se) = mean_se(sum[0], sq[0], count);
    let ci = Z99 * se;
    if (estimate - mc).abs() > 3.0 * ci {
        return Err(AnalysisError::NumericInconsistency {
            what: "delta_infinity",
            quadrature: estimate,
            monte_carlo: mc,
            allowed: 3.0 * ci,
        });
    }
    Ok(DeltaInfinity {
        lambda,
        estimate,
        monte_carlo: mc,
        ci_halfwidth: ci,
        mc_samples: count,
        gain_limit: lambda as f64 * estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpMoment {
    pub alpha: f64,
    /// Integral over the largest square.
    pub value: f64,
    /// (k, ∫ over [−k, k]²) for every shell.
    pub squares: Vec<(f64, f64)>,
}

fn square_integral<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: [T; 2],
    alpha: T,
    k: T,
    tol: &Tolerance<T>,
) -> Result<T, AnalysisError> {
    let [n1, n2] = n;
    let marks = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0];
    let breaks = |centre: T, extra: Option<T>| {
        let mut pts = vec![-k, k];
        for m in marks {
            for s in [T::lit(m), -T::lit(m)] {
                let p = centre + s;
                if p > -k && p < k {
                    pts.push(p);
                }
            }
        }
        if let Some(e) = extra.filter(|e| *e > -k && *e < k) {
            pts.push(e);
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite break points"));
        pts.dedup();
        pts
    };
    let c1 = movement.first_marginal().mean();
    let c2 = movement.second_marginal().mean();
    let outer_breaks = breaks(c1, None);
    let failure = std::cell::RefCell::new(None);
    let est = integrate_with_breaks(
        |x1: T| {
            let kink = (n2 != T::zero()).then(|| -n1 * x1 / n2);
            let inner = integrate_with_breaks(
                |x2: T| {
                    let d = movement.density([x1, x2]);
                    if d == T::zero() {
                        d
                    } else {
                        (alpha * (n1 * x1 + n2 * x2).abs()).exp() * d
                    }
                },
                &breaks(c2, kink),
                tol,
            );
            match inner {
                Ok(e) => e.value,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    T::zero()
                }
            }
        },
        &outer_breaks,
        tol,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(est.value)
}

/// ∫ exp(|α nᵀx|) h(x) dx over growing squares. Divergence is declared when
/// a shell contributes at least as much as the one inside it.
pub fn exp_moment<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    alpha: T,
    tol: &Tolerance<T>,
) -> Result<ExpMoment, AnalysisError> {
    check_positive("alpha", alpha)?;
    let nn = planar(n)?;
    let squares = EXP_MOMENT_SHELLS
        .iter()
        .map(|&k| Ok((k, square_integral(movement, nn, alpha, T::lit(k), tol)?.to_f64_lossy())))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let a = alpha.to_f64_lossy();
    let value = squares.last().expect("shell list is nonempty").1;
    if !value.is_finite() {
        return Err(AnalysisError::InfiniteMoment { alpha: a, ratio: f64::INFINITY });
    }
    let floor = 1e-9 * value.abs() + 10.0 * tol.abs.to_f64_lossy();
    let shells: Vec<f64> = squares.windows(2).map(|w| w[1].1 - w[0].1).collect();
    for w in shells.windows(2) {
        if w[0] > floor && w[1] >= w[0] {
            return Err(AnalysisError::InfiniteMoment { alpha: a, ratio: w[1] / w[0] });
        }
    }
    Ok(ExpMoment { alpha: a, value, squares })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftPoint {
    pub alpha: f64,
    pub delta: f64,
    /// ΔV_α(δ) = E[V_α(D′) | D = δ] − V_α(δ).
    pub value: f64,
    /// ΔV_α(δ) / V_α(δ).
    pub ratio: f64,
    pub mc_ratio: f64,
    pub mc_stderr: f64,
}

/// ΔV_α on a grid of thresholds for several α. Each δ gets one Monte-Carlo
/// sample of selected movements shared by all α.
pub fn drift_curve<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    alphas: &[T],
    deltas: &[T],
    spec: &QuadratureSpec,
) -> Result<Vec<DriftPoint>, AnalysisError> {
    spec.validate()?;
    check_lambda(lambda)?;
    for &a in alphas {
        check_positive("alpha", a)?;
    }
    let tol = spec.tolerance();
    let rows = deltas
        .par_iter()
        .map(|&delta| {
            let law = SelectionLaw::new(movement, n, lambda, delta, &tol)?;
            let (sum, sq, count) = monte_carlo(spec, alphas.len(), |rng, out| {
                let (m, _) = sample_selected_movement(movement, n, lambda, delta, DEFAULT_RESAMPLE_CAP, rng)?;
                let s = n.dot(&m);
                for (o, &a) in out.iter_mut().zip(alphas) {
                    *o = (-a * s).exp().to_f64_lossy();
                }
                Ok(())
            })?;
            alphas
                .iter()
                .enumerate()
                .map(|(k, &alpha)| {
                    let ratio = (law.expect(|s| (-alpha * s).exp())? - T::one()).to_f64_lossy();
                    let (m, se) = mean_se(sum[k], sq[k], count);
                    let mc_ratio = m - 1.0;
                    let allowed = 3.0 * se + 1e-7;
                    if (ratio - mc_ratio).abs() > allowed {
                        return Err(AnalysisError::NumericInconsistency {
                            what: "drift",
                            quadrature: ratio,
                            monte_carlo: mc_ratio,
                            allowed,
                        });
                    }
                    let (a, d) = (alpha.to_f64_lossy(), delta.to_f64_lossy());
                    Ok(DriftPoint { alpha: a, delta: d, value: (a * d).exp() * ratio, ratio, mc_ratio, mc_stderr: se })
                })
                .collect::<Result<Vec<_>, AnalysisError>>()
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn drift<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    alpha: T,
    delta: T,
    spec: &QuadratureSpec,
) -> Result<DriftPoint, AnalysisError> {
    check_positive("delta", delta)?;
    Ok(drift_curve(movement, n, lambda, &[alpha], &[delta], spec)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSearch {
    pub beta: f64,
    pub delta_infinity: f64,
    pub gain_limit: f64,
    /// Open bracket (2L/3, 4L/3) around the gain limit L.
    pub bracket: (f64, f64),
    pub grid: Vec<f64>,
    pub gains: Vec<f64>,
    /// (δ, gain) for the grid points in [β, 10β].
    pub probe: Vec<(f64, f64)>,
}

pub const BETA_GRID_POINTS: usize = 400;
pub const BETA_GRID_RANGE: (f64, f64) = (1e-3, 100.0);

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Smallest grid threshold beyond which the expected gain ∫ nᵀx h*_δ stays
/// inside (2L/3, 4L/3), L = λ·δ_∞.
pub fn find_beta<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    spec: &QuadratureSpec,
) -> Result<BetaSearch, AnalysisError> {
    spec.validate()?;
    let tol = spec.tolerance();
    let di = delta_infinity_quadrature(movement, n, lambda, &tol)?.to_f64_lossy();
    let limit = lambda as f64 * di;
    let bracket = (2.0 * limit / 3.0, 4.0 * limit / 3.0);
    if !(limit > 0.0) {
        return Err(AnalysisError::NoBetaFound { lo: bracket.0, hi: bracket.1 });
    }
    let grid = log_spaced(BETA_GRID_RANGE.0, BETA_GRID_RANGE.1, BETA_GRID_POINTS);
    let gains = grid
        .par_iter()
        .map(|&d| Ok(SelectionLaw::new(movement, n, lambda, T::lit(d), &tol)?.conditional_gain()?.to_f64_lossy()))
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let inside = |g: f64| g > bracket.0 && g < bracket.1;
    let first = gains.iter().rposition(|&g| !inside(g)).map_or(0, |i| i + 1);
    if first == grid.len() {
        return Err(AnalysisError::NoBetaFound { lo: bracket.0, hi: bracket.1 });
    }
    let beta = grid[first];
    let probe =
        grid.iter().zip(&gains).filter(|(d, _)| **d >= beta && **d <= 10.0 * beta).map(|(d, g)| (*d, *g)).collect();
    Ok(BetaSearch { beta, delta_infinity: di, gain_limit: limit, bracket, grid, gains, probe })
}
