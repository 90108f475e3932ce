//! Globally adaptive Gauss–Kronrod (G10/K21) integration.
//!
//! Panels are bisected in order of their error estimate until the summed
//! estimate meets `max(abs, rel * |I|)`. [`Cumulative`] keeps the accepted
//! panels so that running integrals `∫_a^x f` can be queried cheaply.

use thiserror::Error;

use crate::Scalar;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_715_783_945,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature hit {limit} panels with estimated error {error:e} (value {value})")]
    MaxSubdivisions { value: f64, error: f64, limit: usize },
    #[error("integrand is not finite near x = {at}")]
    NonFinite { at: f64 },
    #[error("invalid integration range")]
    BadRange,
}

/// Stopping rule for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
    pub max_subdivisions: usize,
}

impl<T: Scalar> Tolerance<T> {
    pub fn new(abs: T, rel: T) -> Self {
        Self { abs, rel, max_subdivisions: 4000 }
    }

    /// Same rule with the absolute part scaled by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { abs: self.abs * factor, ..*self }
    }
}

impl<T: Scalar> Default for Tolerance<T> {
    fn default() -> Self {
        let floor = T::epsilon() * T::lit(100.0);
        Self::new(T::lit(1e-10).max(floor), T::lit(1e-10).max(floor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

/// One G10/K21 rule application: (kronrod value, error estimate).
fn gk21<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<(T, T), QuadratureError> {
    let lit = T::lit;
    let center = (a + b) * lit(0.5);
    let half = (b - a) * lit(0.5);
    let abs_half = half.abs();
    let mut fv = [T::zero(); 21];
    let fc = f(center);
    fv[10] = fc;
    for j in 0..10 {
        let dx = half * lit(XGK[j]);
        fv[j] = f(center - dx);
        fv[20 - j] = f(center + dx);
    }
    if let Some(bad) = fv.iter().position(|v| !v.is_finite()) {
        let off = if bad == 10 {
            T::zero()
        } else if bad < 10 {
            -half * lit(XGK[bad])
        } else {
            half * lit(XGK[20 - bad])
        };
        return Err(QuadratureError::NonFinite { at: (center + off).to_f64_lossy() });
    }
    let mut res_k = fc * lit(WGK[10]);
    let mut res_g = T::zero();
    let mut res_abs = (fc * lit(WGK[10])).abs();
    for j in 0..10 {
        let pair = fv[j] + fv[20 - j];
        res_k = res_k + lit(WGK[j]) * pair;
        res_abs = res_abs + lit(WGK[j]) * (fv[j].abs() + fv[20 - j].abs());
        if j % 2 == 1 {
            res_g = res_g + lit(WG[j / 2]) * pair;
        }
    }
    let mean = res_k * lit(0.5);
    let mut res_asc = lit(WGK[10]) * (fc - mean).abs();
    for j in 0..10 {
        res_asc = res_asc + lit(WGK[j]) * ((fv[j] - mean).abs() + (fv[20 - j] - mean).abs());
    }
    let value = res_k * half;
    res_abs = res_abs * abs_half;
    res_asc = res_asc * abs_half;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != T::zero() && err != T::zero() {
        let scale = (lit(200.0) * err / res_asc).powf(lit(1.5));
        err = if scale < T::one() { res_asc * scale } else { res_asc };
    }
    let tiny = T::min_positive_value() / (lit(50.0) * T::epsilon());
    if res_abs > tiny {
        err = err.max(lit(50.0) * T::epsilon() * res_abs);
    }
    Ok((value, err))
}

fn adaptive<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    points: &[T],
    tol: &Tolerance<T>,
) -> Result<(Estimate<T>, Vec<Panel<T>>), QuadratureError> {
    if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
        return Err(QuadratureError::BadRange);
    }
    let mut panels = Vec::with_capacity(points.len() + 64);
    for w in points.windows(2) {
        if w[1] < w[0] {
            return Err(QuadratureError::BadRange);
        }
        if w[1] == w[0] {
            continue;
        }
        let (value, error) = gk21(f, w[0], w[1])?;
        panels.push(Panel { a: w[0], b: w[1], value, error });
    }
    let mut evaluations = 21 * panels.len();
    if panels.is_empty() {
        return Ok((Estimate { value: T::zero(), error: T::zero(), evaluations: 0 }, panels));
    }
    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let err: T = panels.iter().map(|p| p.error).sum();
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target {
            return Ok((Estimate { value: total, error: err, evaluations }, panels));
        }
        if panels.len() >= tol.max_subdivisions {
            return Err(QuadratureError::MaxSubdivisions {
                value: total.to_f64_lossy(),
                error: err.to_f64_lossy(),
                limit: tol.max_subdivisions,
            });
        }
        let (worst, _) =
            panels
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc });
        let p = panels[worst];
        let mid = (p.a + p.b) * T::lit(0.5);
        if mid <= p.a || mid >= p.b {
            // Panel cannot be split further at this precision.
            return Ok((Estimate { value: total, error: err, evaluations }, panels));
        }
        let (v1, e1) = gk21(f, p.a, mid)?;
        let (v2, e2) = gk21(f, mid, p.b)?;
        evaluations += 42;
        panels[worst] = Panel { a: p.a, b: mid, value: v1, error: e1 };
        panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }
}

/// `∫_a^b f`.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    if b < a {
        let mut est = integrate(f, b, a, tol)?;
        est.value = -est.value;
        return Ok(est);
    }
    adaptive(&f, &[a, b], tol).map(|(e, _)| e)
}

/// Integral over the sorted break points, splitting the initial panels there.
pub fn integrate_with_breaks<T: Scalar, F: Fn(T) -> T>(
    f: F,
    points: &[T],
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    adaptive(&f, points, tol).map(|(e, _)| e)
}

/// `∫_{-∞}^{∞} f` via the substitution `x = t / (1 - t²)`.
pub fn integrate_line<T: Scalar, F: Fn(T) -> T>(f: F, tol: &Tolerance<T>) -> Result<Estimate<T>, QuadratureError> {
    let g = |t: T| {
        let one = T::one();
        let d = one - t * t;
        let x = t / d;
        let fx = f(x);
        if fx == T::zero() {
            T::zero()
        } else {
            fx * (one + t * t) / (d * d)
        }
    };
    let lit = T::lit;
    let pts = [lit(-1.0), lit(-0.9), lit(-0.5), lit(0.0), lit(0.5), lit(0.9), lit(1.0)];
    adaptive(&g, &pts, tol).map(|(e, _)| e)
}

/// `∫_{-∞}^{b} f` via `x = b - t / (1 - t)`.
pub fn integrate_below<T: Scalar, F: Fn(T) -> T>(
    f: F,
    b: T,
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    half_line(|t| b - t, f, tol)
}

/// `∫_{a}^{∞} f` via `x = a + t / (1 - t)`.
pub fn integrate_above<T: Scalar, F: Fn(T) -> T>(
    f: F,
    a: T,
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    half_line(|t| a + t, f, tol)
}

fn half_line<T: Scalar, M: Fn(T) -> T, F: Fn(T) -> T>(
    map: M,
    f: F,
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    let g = |t: T| {
        let d = T::one() - t;
        let fx = f(map(t / d));
        if fx == T::zero() {
            T::zero()
        } else {
            fx / (d * d)
        }
    };
    let lit = T::lit;
    let pts = [lit(0.0), lit(0.5), lit(0.9), lit(1.0)];
    adaptive(&g, &pts, tol).map(|(e, _)| e)
}

/// Running integral `x ↦ ∫_{start}^{x} f` backed by the adaptive panel set.
pub struct Cumulative<T, F> {
    f: F,
    starts: Vec<T>,
    ends: Vec<T>,
    prefix: Vec<T>,
    total: Estimate<T>,
}

impl<T: Scalar, F: Fn(T) -> T> Cumulative<T, F> {
    pub fn build(f: F, points: &[T], tol: &Tolerance<T>) -> Result<Self, QuadratureError> {
        let (total, mut panels) = adaptive(&f, points, tol)?;
        panels.sort_by(|x, y| x.a.partial_cmp(&y.a).expect("finite panel bounds"));
        let mut starts = Vec::with_capacity(panels.len());
        let mut ends = Vec::with_capacity(panels.len());
        let mut prefix = Vec::with_capacity(panels.len());
        let mut acc = T::zero();
        for p in &panels {
            starts.push(p.a);
            ends.push(p.b);
            prefix.push(acc);
            acc = acc + p.value;
        }
        let total = Estimate { value: acc, ..total };
        Ok(Self { f, starts, ends, prefix, total })
    }

    pub fn total(&self) -> Estimate<T> {
        self.total
    }

    pub fn lower(&self) -> T {
        self.starts.first().copied().unwrap_or_else(T::zero)
    }

    pub fn upper(&self) -> T {
        self.ends.last().copied().unwrap_or_else(T::zero)
    }

    /// `∫_{lower}^{x} f`, clamped to `[0, total]` outside the range.
    pub fn at(&self, x: T) -> T {
        if self.starts.is_empty() || x <= self.lower() {
            return T::zero();
        }
        if x >= self.upper() {
            return self.total.value;
        }
        let i = self.starts.partition_point(|&s| s <= x).saturating_sub(1);
        if x == self.starts[i] {
            return self.prefix[i];
        }
        // The panel was accepted at the requested tolerance, so one K21
        // application on its sub-interval is at least as accurate.
        let part = gk21(&self.f, self.starts[i], x).map(|(v, _)| v).unwrap_or_else(|_| T::nan());
        self.prefix[i] + part
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{norm_cdf, norm_pdf, norm_quantile};
    use approx::assert_relative_eq;

    fn tol() -> Tolerance<f64> {
        Tolerance::new(1e-13, 1e-13)
    }

    #[test]
    fn polynomial_exact() {
        let est = integrate(|x: f64| 3.0 * x * x, 0.0, 2.0, &tol()).unwrap();
        assert_relative_eq!(est.value, 8.0, max_relative = 1e-14);
        let rev = integrate(|x: f64| 3.0 * x * x, 2.0, 0.0, &tol()).unwrap();
        assert_relative_eq!(rev.value, -8.0, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 ln(x) dx = -1 and ∫_0^1 Φ⁻¹(p) p dp = 1/(2√π)
        let est = integrate(|x: f64| x.ln(), 0.0, 1.0, &tol()).unwrap();
        assert!((est.value + 1.0).abs() < 1e-12);
        let est = integrate(|p: f64| p * norm_quantile(p), 0.0, 1.0, &tol()).unwrap();
        assert!((est.value - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn whole_line() {
        let est = integrate_line(|x: f64| norm_pdf(x), &tol()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        let est = integrate_line(|x: f64| x * x * norm_pdf(x), &tol()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn half_lines() {
        let t = tol();
        let below = integrate_below(|x: f64| x.exp(), 0.3, &t).unwrap();
        assert!((below.value - 0.3f64.exp()).abs() < 1e-10);
        let above = integrate_above(|x: f64| (-x * x).exp(), 0.0, &t).unwrap();
        assert!((above.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn breaks_handle_jumps() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let est = integrate_with_breaks(f, &[0.0, 0.3, 1.0], &tol()).unwrap();
        assert_relative_eq!(est.value, 0.3, max_relative = 1e-14);
    }

    #[test]
    fn cumulative_queries() {
        let cum = Cumulative::build(|x: f64| norm_pdf(x), &[-9.0, 9.0], &tol()).unwrap();
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.2, 8.5] {
            assert!((cum.at(x) - (norm_cdf(x) - norm_cdf(-9.0))).abs() < 1e-13, "x={x}");
        }
        assert_eq!(cum.at(-20.0), 0.0);
        assert_eq!(cum.at(20.0), cum.total().value);
    }

    #[test]
    fn reports_non_finite() {
        let err = integrate(|x: f64| 1.0 / (x - 0.5), 0.0, 1.0, &tol());
        assert!(err.is_err());
    }

    #[test]
    fn single_precision_runs() {
        let t = Tolerance::<f32>::default();
        let est = integrate(|x: f32| x.exp(), 0.0, 1.0, &t).unwrap();
        assert!((est.value - (std::f32::consts::E - 1.0)).abs() < 1e-5);
    }
}
