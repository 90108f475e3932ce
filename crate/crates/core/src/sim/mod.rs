//! The (1,λ)-ES with resampling and its normalized-distance chain.
//!
//! One generation from state `(D, Σ)`:
//! every offspring redraws its movement until `nᵀM < D`, the offspring with
//! the largest first coordinate is kept, and for a constant step size the
//! next state is `D' = D - nᵀM*`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::constraint::ConstraintNormal;
use crate::dist::{DistError, MovementDistribution};
use crate::rng::{derive_seed, stream, STREAM_DERIVATION};
use crate::Scalar;

pub const DEFAULT_RESAMPLE_CAP: u64 = 1_000_000;

/// Multiplier η applied to the step size each generation. It receives the
/// first resampling attempt of every offspring in the generation.
pub type StepFactor<T> = Arc<dyn Fn(&[Vec<T>]) -> T + Send + Sync>;

#[derive(Clone)]
pub enum StepSizeRule<T> {
    Constant(T),
    Custom(StepFactor<T>),
}

impl<T: fmt::Display> fmt::Debug for StepSizeRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(s) => write!(f, "Constant({s})"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigViolation {
    /// Short stable identifier of the rule.
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("resampling gave up after {attempts} infeasible draws")]
    ResampleExhausted { attempts: u64 },
    #[error("cannot select from an empty offspring list")]
    EmptySelection,
    #[error("step-size factor must be positive and finite (got {value})")]
    StepFactor { value: f64 },
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<ConfigViolation>),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("replica {replica}, generation {generation}: {source}")]
    AtGeneration { replica: usize, generation: usize, source: Box<SimError> },
}

#[derive(Debug, Clone)]
pub struct EsConfig<T: fmt::Display> {
    pub d: usize,
    pub lambda: usize,
    pub n: ConstraintNormal<T>,
    pub movement: MovementDistribution<T>,
    pub step: StepSizeRule<T>,
    pub x0: Vec<T>,
    pub sigma0: T,
    pub resample_cap: u64,
    pub seed: u64,
}

impl<T: Scalar> EsConfig<T> {
    /// Constant step size σ with the default resampling cap.
    pub fn constant(
        d: usize,
        lambda: usize,
        n: ConstraintNormal<T>,
        movement: MovementDistribution<T>,
        sigma: T,
        x0: Vec<T>,
        seed: u64,
    ) -> Self {
        Self {
            d,
            lambda,
            n,
            movement,
            step: StepSizeRule::Constant(sigma),
            x0,
            sigma0: sigma,
            resample_cap: DEFAULT_RESAMPLE_CAP,
            seed,
        }
    }

    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        let mut push = |rule, message: String| out.push(ConfigViolation { rule, message });
        if self.d < 2 {
            push("dimension", format!("d must be >= 2 (got {})", self.d));
        }
        if self.lambda < 1 {
            push("offspring-count", "lambda must be >= 1".into());
        }
        if self.n.dim() != self.d {
            push("normal-dimension", format!("n has {} components but d = {}", self.n.dim(), self.d));
        }
        if self.x0.len() != self.d {
            push("initial-point-dimension", format!("x0 has {} components but d = {}", self.x0.len(), self.d));
        } else if self.n.dim() == self.d {
            let g = -self.n.dot(&self.x0);
            if !(g > T::zero()) || !g.is_finite() {
                push("initial-feasibility", format!("-n.x0 must be positive (got {g})"));
            }
        }
        if !(self.sigma0 > T::zero()) || !self.sigma0.is_finite() {
            push("initial-step-size", format!("sigma0 must be positive (got {})", self.sigma0));
        }
        if let StepSizeRule::Constant(s) = self.step {
            if !(s > T::zero()) || !s.is_finite() {
                push("constant-step-size", format!("sigma must be positive (got {s})"));
            }
        }
        if self.resample_cap < 1 {
            push("resample-cap", "resample_cap must be >= 1".into());
        }
        if let Err(e) = self.movement.validate() {
            push("movement-distribution", e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(v))
        }
    }
}

/// Chain point `(D_t, Σ_t)` for the generation about to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    pub distance: T,
    pub sigma: T,
    /// First attempts already drawn to set Σ_t (custom step-size rules only).
    pub pending: Option<Vec<Vec<T>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord<T> {
    /// 1-based generation index.
    pub t: usize,
    /// D_t, the resampling threshold of this generation.
    pub distance: T,
    pub sigma: T,
    /// 0-based index of the selected offspring.
    pub selected: usize,
    /// Draws used by each offspring.
    pub attempts: Vec<u64>,
    pub movement: Vec<T>,
    pub n_dot_move: T,
    /// X_t, when the position is tracked.
    pub x: Option<Vec<T>>,
}

impl<T> GenerationRecord<T> {
    pub fn total_attempts(&self) -> u64 {
        self.attempts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub replica: usize,
    pub master_seed: u64,
    pub stream_seed: u64,
    pub records: Vec<GenerationRecord<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn stream_derivation(&self) -> &'static str {
        STREAM_DERIVATION
    }

    pub fn distances(&self) -> Vec<T> {
        self.records.iter().map(|r| r.distance).collect()
    }
}

/// Draws movements until `nᵀM < delta`; returns the count of draws.
/// `first` optionally supplies an already drawn first attempt.
pub fn resample_movement<T: Scalar, R: Rng + ?Sized>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    delta: T,
    cap: u64,
    rng: &mut R,
    first: Option<&[T]>,
    out: &mut [T],
) -> Result<u64, SimError> {
    let mut j = 1;
    match first {
        Some(m) => out.copy_from_slice(m),
        None => movement.sample_into(rng, out)?,
    }
    loop {
        if n.dot(out) < delta {
            return Ok(j);
        }
        if j >= cap {
            return Err(SimError::ResampleExhausted { attempts: j });
        }
        movement.sample_into(rng, out)?;
        j += 1;
    }
}

/// λ feasible movements for threshold `state.distance`, with draw counts.
pub fn generate_offspring<T: Scalar, R: Rng + ?Sized>(
    state: &ChainState<T>,
    cfg: &EsConfig<T>,
    rng: &mut R,
) -> Result<Vec<(Vec<T>, u64)>, SimError> {
    (0..cfg.lambda)
        .map(|i| {
            let mut m = vec![T::zero(); cfg.d];
            let first = state.pending.as_ref().map(|p| p[i].as_slice());
            let j = resample_movement(&cfg.movement, &cfg.n, state.distance, cfg.resample_cap, rng, first, &mut m)?;
            Ok((m, j))
        })
        .collect()
}

/// Index of the largest first coordinate; ties go to the lowest index.
pub fn select_best<T: Scalar, V: AsRef<[T]>>(candidates: &[V]) -> Result<usize, SimError> {
    let mut best: Option<(usize, T)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let v = c.as_ref()[0];
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(SimError::EmptySelection)
}

fn draw_first_attempts<T: Scalar, R: Rng + ?Sized>(cfg: &EsConfig<T>, rng: &mut R) -> Result<Vec<Vec<T>>, SimError> {
    (0..cfg.lambda).map(|_| Ok(cfg.movement.sample(cfg.d, rng)?)).collect()
}

fn apply_factor<T: Scalar>(eta: &StepFactor<T>, firsts: &[Vec<T>], sigma: T) -> Result<T, SimError> {
    let f = eta(firsts);
    if !(f > T::zero()) || !f.is_finite() {
        return Err(SimError::StepFactor { value: f.to_f64_lossy() });
    }
    Ok(f * sigma)
}

impl<T: Scalar> ChainState<T> {
    /// State of the first generation: Σ₁ from the step rule, D₁ = -nᵀX₀/Σ₁.
    pub fn initial<R: Rng + ?Sized>(cfg: &EsConfig<T>, rng: &mut R) -> Result<Self, SimError> {
        let gap = -cfg.n.dot(&cfg.x0);
        match &cfg.step {
            StepSizeRule::Constant(s) => Ok(Self { distance: gap / *s, sigma: *s, pending: None }),
            StepSizeRule::Custom(eta) => {
                let firsts = draw_first_attempts(cfg, rng)?;
                let sigma = apply_factor(eta, &firsts, cfg.sigma0)?;
                Ok(Self { distance: gap / sigma, sigma, pending: Some(firsts) })
            }
        }
    }
}

/// One generation. `t` is the 1-based index stored in the record.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    state: &ChainState<T>,
    cfg: &EsConfig<T>,
    t: usize,
    rng: &mut R,
) -> Result<(ChainState<T>, GenerationRecord<T>), SimError> {
    let offspring = generate_offspring(state, cfg, rng)?;
    let selected = select_best(&offspring.iter().map(|o| o.0.as_slice()).collect::<Vec<_>>())?;
    let attempts: Vec<u64> = offspring.iter().map(|o| o.1).collect();
    let movement = offspring.into_iter().nth(selected).map(|o| o.0).expect("selected index is in range");
    let n_dot_move = cfg.n.dot(&movement);
    let gap = state.distance - n_dot_move;
    let next = match &cfg.step {
        StepSizeRule::Constant(s) => ChainState { distance: gap, sigma: *s, pending: None },
        StepSizeRule::Custom(eta) => {
            let firsts = draw_first_attempts(cfg, rng)?;
            let sigma = apply_factor(eta, &firsts, state.sigma)?;
            ChainState { distance: gap * state.sigma / sigma, sigma, pending: Some(firsts) }
        }
    };
    let rec = GenerationRecord {
        t,
        distance: state.distance,
        sigma: state.sigma,
        selected,
        attempts,
        movement,
        n_dot_move,
        x: None,
    };
    Ok((next, rec))
}

/// Runs `generations` steps on `rng`, calling `visit` with every record.
/// With `track_x` the records carry X_t = X_{t-1} + Σ_t M*.
pub fn simulate<T: Scalar, R: Rng + ?Sized, F: FnMut(GenerationRecord<T>)>(
    cfg: &EsConfig<T>,
    generations: usize,
    rng: &mut R,
    track_x: bool,
    mut visit: F,
) -> Result<(), SimError> {
    cfg.validate()?;
    let at =
        |generation: usize| move |e: SimError| SimError::AtGeneration { replica: 0, generation, source: Box::new(e) };
    let mut state = ChainState::initial(cfg, rng).map_err(at(0))?;
    let mut x = track_x.then(|| cfg.x0.clone());
    for t in 1..=generations {
        let (next, mut rec) = step(&state, cfg, t, rng).map_err(at(t))?;
        if let Some(x) = x.as_mut() {
            for (xi, mi) in x.iter_mut().zip(&rec.movement) {
                *xi = *xi + rec.sigma * *mi;
            }
            rec.x = Some(x.clone());
        }
        visit(rec);
        state = next;
    }
    Ok(())
}

fn set_replica(e: SimError, replica: usize) -> SimError {
    match e {
        SimError::AtGeneration { generation, source, .. } => SimError::AtGeneration { replica, generation, source },
        other => other,
    }
}

/// Full trajectory of one replica including positions X_t.
pub fn run_full_es<T: Scalar>(cfg: &EsConfig<T>, generations: usize, replica: usize) -> Result<Trace<T>, SimError> {
    run_replica(cfg, generations, replica, true)
}

fn run_replica<T: Scalar>(
    cfg: &EsConfig<T>,
    generations: usize,
    replica: usize,
    track_x: bool,
) -> Result<Trace<T>, SimError> {
    let mut rng = stream(cfg.seed, replica as u64);
    let mut records = Vec::with_capacity(generations);
    simulate(cfg, generations, &mut rng, track_x, |r| records.push(r)).map_err(|e| set_replica(e, replica))?;
    Ok(Trace { replica, master_seed: cfg.seed, stream_seed: derive_seed(cfg.seed, replica as u64), records })
}

/// Independent replicas, replica `r` on stream `(seed, r)`. Replicas run in
/// parallel on the current rayon pool; the output order is by replica.
pub fn run_chain<T: Scalar>(
    cfg: &EsConfig<T>,
    generations: usize,
    replicas: usize,
    track_x: bool,
) -> Result<Vec<Trace<T>>, SimError> {
    cfg.validate()?;
    (0..replicas).into_par_iter().map(|r| run_replica(cfg, generations, r, track_x)).collect()
}

/// Only the distance paths `D_1..D_T` of each replica; same streams as
/// [`run_chain`], without storing full records.
pub fn run_distances<T: Scalar>(
    cfg: &EsConfig<T>,
    generations: usize,
    replicas: usize,
) -> Result<Vec<Vec<T>>, SimError> {
    cfg.validate()?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, r as u64);
            let mut path = Vec::with_capacity(generations);
            simulate(cfg, generations, &mut rng, false, |rec| path.push(rec.distance))
                .map_err(|e| set_replica(e, r))?;
            Ok(path)
        })
        .collect()
}
