//! Laws of one resampled movement (h_δ) and of the selected movement (h*_δ).
//!
//! Integrals run over the level p = H₁(x₁) of the first coordinate, where the
//! first marginal becomes uniform. The conditional feasibility
//! `k(p) = P(nᵀX < δ | H₁(X₁) = p)` then gives H(L_δ) = ∫k and the truncated
//! first-coordinate distribution F_δ as a running integral of k.

use std::cell::RefCell;

use rand::Rng;
use serde::Serialize;

use super::{check_lambda, check_positive, AnalysisError};
use crate::constraint::ConstraintNormal;
use crate::dist::{DistError, Marginal1D, MovementDistribution};
use crate::quadrature::{integrate_with_breaks, Cumulative, Tolerance};
use crate::sim::{resample_movement, select_best, SimError};
use crate::Scalar;

type Feasibility<T> = Box<dyn Fn(T) -> T + Send + Sync>;

pub struct SelectionLaw<T: Scalar> {
    movement: MovementDistribution<T>,
    n: [T; 2],
    lambda: usize,
    delta: T,
    tol: Tolerance<T>,
    first: Marginal1D<T>,
    breaks: Vec<T>,
    cum: Cumulative<T, Feasibility<T>>,
    mass: T,
}

/// Keeps quadrature nodes off the endpoints of the unit interval.
pub(crate) fn interior<T: Scalar>(p: T) -> T {
    p.max(T::min_positive_value()).min(T::one() - T::epsilon() * T::lit(0.5))
}

fn scaled<T: Scalar>(c: T, x: T) -> T {
    if c == T::zero() {
        T::zero()
    } else {
        c * x
    }
}

impl<T: Scalar> SelectionLaw<T> {
    /// Law of the best of `lambda` resampled movements at threshold `delta`.
    pub fn new(
        movement: &MovementDistribution<T>,
        n: &ConstraintNormal<T>,
        lambda: usize,
        delta: T,
        tol: &Tolerance<T>,
    ) -> Result<Self, AnalysisError> {
        check_lambda(lambda)?;
        Self::build(movement, n, lambda, delta, tol)
    }

    /// Only the truncated law h_δ; selection queries report λ = 1.
    pub fn truncated(
        movement: &MovementDistribution<T>,
        n: &ConstraintNormal<T>,
        delta: T,
        tol: &Tolerance<T>,
    ) -> Result<Self, AnalysisError> {
        Self::build(movement, n, 1, delta, tol)
    }

    fn build(
        movement: &MovementDistribution<T>,
        n: &ConstraintNormal<T>,
        lambda: usize,
        delta: T,
        tol: &Tolerance<T>,
    ) -> Result<Self, AnalysisError> {
        check_positive("delta", delta)?;
        movement.validate()?;
        let [n1, n2] = n.planar().ok_or(AnalysisError::NonPlanarNormal)?;
        let first = movement.first_marginal();
        let (zero, one) = (T::zero(), T::one());
        let (lo, hi) = if n2 == zero {
            let edge = first.cdf(delta / n1);
            if n1 > zero {
                (zero, edge)
            } else {
                (edge, one)
            }
        } else {
            (zero, one)
        };
        let mut breaks = vec![lo];
        if n1 != zero && n2 != zero {
            let edge = first.cdf(delta / n1);
            if edge > lo && edge < hi {
                breaks.push(edge);
            }
        }
        breaks.push(hi);
        let m = *movement;
        let kf: Feasibility<T> = Box::new(move |p: T| {
            let p = interior(p);
            let x1 = first.quantile(p);
            if n2 == T::zero() {
                return if scaled(n1, x1) < delta { T::one() } else { T::zero() };
            }
            let c = m.conditional_at_level(p);
            let b = (delta - scaled(n1, x1)) / n2;
            if n2 > T::zero() {
                c.cdf(b)
            } else {
                c.sf(b)
            }
        });
        let cum = Cumulative::build(kf, &breaks, tol)?;
        let mass = cum.total().value;
        if !(mass > zero) {
            return Err(AnalysisError::Dist(DistError::Domain {
                what: "feasible half-plane has no mass at this threshold",
                value: delta.to_f64_lossy(),
            }));
        }
        Ok(Self { movement: m, n: [n1, n2], lambda, delta, tol: *tol, first, breaks, cum, mass })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// H(L_δ).
    pub fn halfspace_mass(&self) -> T {
        self.mass
    }

    fn level_cdf(&self, p: T) -> T {
        (self.cum.at(p) / self.mass).min(T::one()).max(T::zero())
    }

    /// F_δ(x₁) = H_δ((−∞, x₁) × R).
    pub fn first_marginal_cdf(&self, x1: T) -> T {
        self.level_cdf(self.first.cdf(x1))
    }

    /// F_δ(x₁)^λ, the distribution function of the selected first coordinate.
    pub fn selected_x1_cdf(&self, x1: T) -> T {
        self.first_marginal_cdf(x1).powi(self.lambda as i32)
    }

    /// h_δ(x).
    pub fn resampled_density(&self, x: [T; 2]) -> T {
        if !(self.n[0] * x[0] + self.n[1] * x[1] < self.delta) {
            return T::zero();
        }
        self.movement.density(x) / self.mass
    }

    /// h*_δ(x) = λ h_δ(x) F_δ(x₁)^{λ−1}.
    pub fn selected_density(&self, x: [T; 2]) -> Result<T, AnalysisError> {
        check_lambda(self.lambda)?;
        let h = self.resampled_density(x);
        if h == T::zero() {
            return Ok(h);
        }
        Ok(T::from_usize_lossy(self.lambda) * h * self.first_marginal_cdf(x[0]).powi(self.lambda as i32 - 1))
    }

    /// ∫ g(p) λ F(p)^{λ−1} / H(L_δ) dp, with `inner` the conditional part at level p.
    fn outer<G: Fn(T, T) -> Result<T, DistError>>(&self, inner: G) -> Result<T, AnalysisError> {
        check_lambda(self.lambda)?;
        let failure = RefCell::new(None);
        let lam = T::from_usize_lossy(self.lambda);
        let est = integrate_with_breaks(
            |p: T| {
                let p = interior(p);
                let w = self.level_cdf(p).powi(self.lambda as i32 - 1);
                if w == T::zero() {
                    return T::zero();
                }
                match inner(p, self.first.quantile(p)) {
                    Ok(v) => lam * w * v / self.mass,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        T::zero()
                    }
                }
            },
            &self.breaks,
            &self.tol,
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e.into());
        }
        Ok(est.value)
    }

    /// E*_δ[g(nᵀX)] under the selected law.
    pub fn expect<G: Fn(T) -> T>(&self, g: G) -> Result<T, AnalysisError> {
        let [n1, n2] = self.n;
        let delta = self.delta;
        self.outer(|p, x1| {
            let s1 = scaled(n1, x1);
            if n2 == T::zero() {
                return Ok(if s1 < delta { g(s1) } else { T::zero() });
            }
            let c = self.movement.conditional_at_level(p);
            let b = (delta - s1) / n2;
            let f = |x2: T| g(s1 + n2 * x2);
            if n2 > T::zero() {
                c.integrate(T::neg_infinity(), b, f, &self.tol)
            } else {
                c.integrate(b, T::infinity(), f, &self.tol)
            }
        })
    }

    /// ∫ nᵀx h*_δ(x) dx, the expected one-step decrease of the distance.
    pub fn conditional_gain(&self) -> Result<T, AnalysisError> {
        self.expect(|s| s)
    }

    /// P(δ, (a, b)) = H*_δ({x : a < δ − nᵀx < b}).
    pub fn transition_prob(&self, a: T, b: T) -> Result<T, AnalysisError> {
        check_lambda(self.lambda)?;
        if !(b > a) {
            return Err(AnalysisError::InvalidInput(format!("interval needs a < b (got ({a}, {b}))")));
        }
        let [n1, n2] = self.n;
        let lo = self.delta - b;
        let hi = (self.delta - a).min(self.delta);
        if !(hi > lo) {
            return Ok(T::zero());
        }
        if n2 == T::zero() {
            let (x_lo, x_hi) = if n1 > T::zero() { (lo / n1, hi / n1) } else { (hi / n1, lo / n1) };
            let p = self.selected_x1_cdf(x_hi) - self.selected_x1_cdf(x_lo);
            return Ok(p.max(T::zero()));
        }
        let p = self.outer(|p, x1| {
            let c = self.movement.conditional_at_level(p);
            let s1 = scaled(n1, x1);
            let (u, v) = ((lo - s1) / n2, (hi - s1) / n2);
            Ok(if n2 > T::zero() { c.mass(u, v) } else { c.mass(v, u) })
        })?;
        Ok(p.max(T::zero()).min(T::one()))
    }
}

/// One row of [`kernel_continuity_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityRow {
    pub eps: f64,
    pub below: f64,
    pub above: f64,
    /// max(|P(δ−ε, A) − P(δ, A)|, |P(δ+ε, A) − P(δ, A)|).
    pub difference: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn kernel_continuity_probe<T: Scalar>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    delta: T,
    interval: (T, T),
    eps: &[T],
    tol: &Tolerance<T>,
) -> Result<Vec<ContinuityRow>, AnalysisError> {
    let at = |d: T| SelectionLaw::new(movement, n, lambda, d, tol)?.transition_prob(interval.0, interval.1);
    let centre = at(delta)?;
    eps.iter()
        .map(|&e| {
            if !(delta - e > T::zero()) || e < T::zero() {
                return Err(AnalysisError::InvalidInput(format!("probe delta {delta} - {e} is not positive")));
            }
            let below = (at(delta - e)? - centre).abs().to_f64_lossy();
            let above = (at(delta + e)? - centre).abs().to_f64_lossy();
            Ok(ContinuityRow { eps: e.to_f64_lossy(), below, above, difference: below.max(above) })
        })
        .collect()
}

/// Best of `lambda` movements resampled below `delta`; returns the movement
/// (first `d` coordinates) and the total number of draws.
pub fn sample_selected_movement<T: Scalar, R: Rng + ?Sized>(
    movement: &MovementDistribution<T>,
    n: &ConstraintNormal<T>,
    lambda: usize,
    delta: T,
    cap: u64,
    rng: &mut R,
) -> Result<(Vec<T>, u64), SimError> {
    let d = n.dim();
    let mut best: Option<Vec<T>> = None;
    let mut draws = 0;
    let mut m = vec![T::zero(); d];
    for _ in 0..lambda {
        draws += resample_movement(movement, n, delta, cap, rng, None, &mut m)?;
        let replace = match &best {
            None => true,
            Some(b) => select_best(&[b.as_slice(), m.as_slice()])? == 1,
        };
        if replace {
            best = Some(m.clone());
        }
    }
    best.map(|b| (b, draws)).ok_or(SimError::EmptySelection)
}
