//! Quadrature evaluation of the chain's analytic objects, with Monte-Carlo
//! confirmation and statistical ergodicity proxies on simulated paths.

mod diagnostics;
mod moments;
mod selection;

pub use diagnostics::{
    diagnose, ergodicity_diagnostics, CrossReplica, DiagnoseSettings, DiagnosticsReport, ErgodicitySettings,
    ErgodicityStats, RateFit,
};
pub use moments::{
    delta_infinity, drift, drift_curve, exp_moment, find_beta, log_spaced, BetaSearch, DeltaInfinity, DriftPoint,
    ExpMoment, BETA_GRID_POINTS, BETA_GRID_RANGE, EXP_MOMENT_SHELLS,
};
pub use selection::{kernel_continuity_probe, sample_selected_movement, ContinuityRow, SelectionLaw};

use serde::{Deserialize, Serialize};

use crate::dist::DistError;
use crate::quadrature::{QuadratureError, Tolerance};
use crate::sim::SimError;
use crate::Scalar;

/// Accuracy settings shared by the analysis operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Draws for Monte-Carlo confirmation.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-8, max_subdivisions: 4000, mc_samples: 1_000_000, mc_seed: 0x5eed }
    }
}

impl QuadratureSpec {
    pub fn tolerance<T: Scalar>(&self) -> Tolerance<T> {
        let mut t = Tolerance::new(T::lit(self.abs_tol), T::lit(self.rel_tol));
        t.max_subdivisions = self.max_subdivisions;
        t
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_subdivisions == 0 {
            return Err(AnalysisError::InvalidInput(format!(
                "quadrature tolerances must be positive (abs {}, rel {}, max panels {})",
                self.abs_tol, self.rel_tol, self.max_subdivisions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("analysis needs lambda >= 2 (got {0})")]
    LambdaTooSmall(usize),
    #[error("the analytic layer needs a normal supported on the first two coordinates")]
    NonPlanarNormal,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what}: quadrature {quadrature} and Monte Carlo {monte_carlo} differ by more than {allowed}")]
    NumericInconsistency { what: &'static str, quadrature: f64, monte_carlo: f64, allowed: f64 },
    #[error("conditional gain never settles in ({lo}, {hi}) on the search grid")]
    NoBetaFound { lo: f64, hi: f64 },
    #[error("exponential moment diverges at alpha = {alpha} (shell ratio {ratio})")]
    InfiniteMoment { alpha: f64, ratio: f64 },
    #[error("need at least {needed} samples per time slice (got {got})")]
    SampleSize { needed: usize, got: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

pub(crate) fn check_lambda(lambda: usize) -> Result<(), AnalysisError> {
    if lambda < 2 {
        return Err(AnalysisError::LambdaTooSmall(lambda));
    }
    Ok(())
}

pub(crate) fn check_positive<T: Scalar>(what: &str, v: T) -> Result<(), AnalysisError> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(AnalysisError::InvalidInput(format!("{what} must be positive and finite (got {v})")));
    }
    Ok(())
}
