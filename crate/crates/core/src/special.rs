//! Normal distribution primitives: density, CDF, quantile and the bivariate
//! normal CDF.

use crate::Scalar;

#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    (-half * x * x).exp() / (T::TAU()).sqrt()
}

/// Standard normal CDF, accurate in the lower tail.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (-x / T::SQRT_2()).erfc()
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
#[inline]
pub fn norm_sf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (x / T::SQRT_2()).erfc()
}

const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];

fn poly<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Lower-half quantile (`p <= 0.5`): rational start plus one Halley step.
fn lower_quantile<T: Scalar>(p: T) -> T {
    let p_low = T::lit(0.02425);
    let x0 = if p < p_low {
        let q = (-T::lit(2.0) * p.ln()).sqrt();
        poly(&ACKLAM_C, q) / (poly(&ACKLAM_D, q) * q + T::one())
    } else {
        let q = p - T::lit(0.5);
        let r = q * q;
        poly(&ACKLAM_A, r) * q / (poly(&ACKLAM_B, r) * r + T::one())
    };
    let mut x = x0;
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * T::TAU().sqrt() * (x * x * T::lit(0.5)).exp();
        if !u.is_finite() {
            break;
        }
        x = x - u / (T::one() + x * u * T::lit(0.5));
    }
    x
}

/// Standard normal quantile Φ⁻¹(p). Returns ∓∞ at 0 and 1, NaN outside.
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    let half = T::lit(0.5);
    if p <= half {
        lower_quantile(p)
    } else {
        -lower_quantile(T::one() - p)
    }
}

const GL_W: [&[f64]; 3] = [
    &[0.1713244923791705, 0.3607615730481384, 0.4679139345726904],
    &[
        0.04717533638651177,
        0.1069393259953183,
        0.1600783285433464,
        0.2031674267230659,
        0.2334925365383547,
        0.2491470458134029,
    ],
    &[
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410906,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183821,
        0.1491729864726037,
        0.1527533871307259,
    ],
];
const GL_X: [&[f64]; 3] = [
    &[-0.9324695142031522, -0.6612093864662647, -0.2386191860831970],
    &[
        -0.9815606342467191,
        -0.9041172563704750,
        -0.7699026741943050,
        -0.5873179542866171,
        -0.3678314989981802,
        -0.1252334085114692,
    ],
    &[
        -0.9931285991850949,
        -0.9639719272779138,
        -0.9122344282513259,
        -0.8391169718222188,
        -0.7463319064601508,
        -0.6360536807265150,
        -0.5108670019508271,
        -0.3737060887154196,
        -0.2277858511416451,
        -0.07652652113349733,
    ],
];

/// Upper orthant probability `P(X > h, Y > k)` for a standard bivariate
/// normal with correlation `r` (Drezner–Wesolowsky / Genz).
fn bvn_upper<T: Scalar>(h: T, k: T, r: T) -> T {
    let lit = T::lit;
    let two_pi = T::TAU();
    let abs_r = r.abs();
    let ng = if abs_r < lit(0.3) {
        0
    } else if abs_r < lit(0.75) {
        1
    } else {
        2
    };
    let (ws, xs) = (GL_W[ng], GL_X[ng]);
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = T::zero();
    if abs_r < lit(0.925) {
        let hs = (h * h + k * k) / lit(2.0);
        let asr = r.asin();
        for (&w, &x) in ws.iter().zip(xs) {
            let (w, x) = (lit(w), lit(x));
            for sgn in [T::one(), -T::one()] {
                let sn = (asr * (sgn * x + T::one()) / lit(2.0)).sin();
                bvn = bvn + w * ((sn * hk - hs) / (T::one() - sn * sn)).exp();
            }
        }
        bvn * asr / (lit(2.0) * two_pi) + norm_cdf(-h) * norm_cdf(-k)
    } else {
        if r < T::zero() {
            k = -k;
            hk = -hk;
        }
        if abs_r < T::one() {
            let a_s = (T::one() - r) * (T::one() + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (lit(4.0) - hk) / lit(8.0);
            let d = (lit(12.0) - hk) / lit(16.0);
            bvn = a
                * (-(bs / a_s + hk) / lit(2.0)).exp()
                * (T::one() - c * (bs - a_s) * (T::one() - d * bs / lit(5.0)) / lit(3.0)
                    + c * d * a_s * a_s / lit(5.0));
            if hk > lit(-160.0) {
                let b = bs.sqrt();
                bvn = bvn
                    - (-hk / lit(2.0)).exp()
                        * two_pi.sqrt()
                        * norm_cdf(-b / a)
                        * b
                        * (T::one() - c * bs * (T::one() - d * bs / lit(5.0)) / lit(3.0));
            }
            a = a / lit(2.0);
            for (&w, &x) in ws.iter().zip(xs) {
                let (w, x) = (lit(w), lit(x));
                let xs1 = (a * (x + T::one())).powi(2);
                let rs1 = (T::one() - xs1).sqrt();
                bvn = bvn
                    + a * w
                        * ((-bs / (lit(2.0) * xs1) - hk / (T::one() + rs1)).exp() / rs1
                            - (-(bs / xs1 + hk) / lit(2.0)).exp() * (T::one() + c * xs1 * (T::one() + d * xs1)));
                let xs2 = a_s * (T::one() - x).powi(2) / lit(4.0);
                let rs2 = (T::one() - xs2).sqrt();
                bvn = bvn
                    + a * w
                        * (-(bs / xs2 + hk) / lit(2.0)).exp()
                        * ((-hk * (T::one() - rs2) / (lit(2.0) * (T::one() + rs2))).exp() / rs2
                            - (T::one() + c * xs2 * (T::one() + d * xs2)));
            }
            bvn = -bvn / two_pi;
        }
        if r > T::zero() {
            bvn + norm_cdf(-h.max(k))
        } else {
            -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(T::zero())
        }
    }
}

/// Standard bivariate normal CDF `P(X <= x, Y <= y)` with correlation `rho`.
pub fn bvn_cdf<T: Scalar>(x: T, y: T, rho: T) -> T {
    if x == T::neg_infinity() || y == T::neg_infinity() {
        return T::zero();
    }
    if x == T::infinity() {
        return norm_cdf(y);
    }
    if y == T::infinity() {
        return norm_cdf(x);
    }
    bvn_upper(-x, -y, rho).max(T::zero()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(norm_cdf(0.0f64), 0.5);
        assert_relative_eq!(norm_cdf(1.0f64), 0.841_344_746_068_542_9, max_relative = 1e-15);
        assert_relative_eq!(norm_cdf(-8.0f64), 6.220_960_574_271_785e-16, max_relative = 1e-12);
        assert_relative_eq!(norm_pdf(1.0f64), 0.241_970_724_519_143_37, max_relative = 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-15, "p={p}");
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10, 1e-5] {
            let x = norm_quantile(p);
            assert_relative_eq!(norm_cdf(x), p, max_relative = 1e-13);
            assert_relative_eq!(norm_quantile(1.0 - p), -norm_quantile(1.0 - (1.0 - p)), max_relative = 1e-12);
        }
        assert!(norm_quantile(0.0f64).is_infinite());
        assert!(norm_quantile(1.5f64).is_nan());
    }

    #[test]
    fn quantile_single_precision() {
        let x: f32 = norm_quantile(0.975f32);
        assert!((x - 1.959_964).abs() < 1e-5);
    }

    /// P(X<=x, Y<=y) = ∫_{-∞}^{x} φ(s) Φ((y - ρ s)/√(1-ρ²)) ds by composite Simpson.
    fn bvn_oracle(x: f64, y: f64, rho: f64) -> f64 {
        let lo = -12.0;
        let n = 20_000;
        let h = (x - lo) / n as f64;
        let s = (1.0 - rho * rho).sqrt();
        let f = |t: f64| norm_pdf(t) * norm_cdf((y - rho * t) / s);
        let mut acc = f(lo) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn bvn_matches_quadrature_oracle() {
        for &rho in &[-0.95, -0.8, -0.5, -0.1, 0.0, 0.2, 0.6, 0.9, 0.97] {
            for &(x, y) in &[(0.0, 0.0), (1.0, -0.5), (-2.0, 1.5), (2.5, 2.0), (-1.0, -1.0)] {
                let got = bvn_cdf(x, y, rho);
                let want = bvn_oracle(x, y, rho);
                assert!((got - want).abs() < 1e-12, "rho={rho} x={x} y={y}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bvn_limits() {
        assert_relative_eq!(bvn_cdf(0.0f64, 0.0, 0.0), 0.25, max_relative = 1e-15);
        // Sheppard: P(X<=0, Y<=0) = 1/4 + asin(ρ)/(2π)
        let rho = 0.5f64;
        assert_relative_eq!(bvn_cdf(0.0, 0.0, rho), 0.25 + rho.asin() / std::f64::consts::TAU, max_relative = 1e-14);
        assert_relative_eq!(bvn_cdf(0.3, f64::INFINITY, 0.4), norm_cdf(0.3));
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 0.3, 0.4), 0.0);
        assert_relative_eq!(bvn_cdf(0.3, 0.7, 1.0), norm_cdf(0.3), max_relative = 1e-14);
        // Y = -X: P(X <= 0.3, X >= 0.2)
        assert!((bvn_cdf(0.3f64, -0.2, -1.0) - (norm_cdf(0.3) - norm_cdf(0.2))).abs() < 1e-14);
        assert_eq!(bvn_cdf(-0.3f64, -0.2, -1.0), 0.0);
    }
}
