//! Goodness-of-fit statistics used to compare simulated laws with their
//! quadrature counterparts.

use statrs::distribution::{ChiSquared, ContinuousCDF};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let xs = sorted(xs);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |acc: f64, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let xs = sorted(xs);
    let ys = sorted(ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² test of `observed` counts against cell probabilities.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> ChiSquareOutcome {
    assert_eq!(observed.len(), probabilities.len());
    assert!(observed.len() >= 2);
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probabilities.iter().sum();
    let statistic = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total_p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = observed.len() - 1;
    let law = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    ChiSquareOutcome { statistic, dof, p_value: law.sf(statistic) }
}

/// Kendall's τ in O(n log n) (Knight's algorithm); assumes no ties.
pub fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut v = pairs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ys: Vec<f64> = v.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);
    let total = (n as f64) * (n as f64 - 1.0) / 2.0;
    1.0 - 2.0 * discordant as f64 / total
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = buf.split_at_mut(mid);
    let mut swaps = merge_count(&mut v[..mid], left) + merge_count(&mut v[mid..], right);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kendall_brute(pairs: &[(f64, f64)]) -> f64 {
        let n = pairs.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                let a = (pairs[i].0 - pairs[j].0) * (pairs[i].1 - pairs[j].1);
                s += if a > 0.0 { 1 } else { -1 };
            }
        }
        s as f64 / (n * (n - 1) / 2) as f64
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 10.0).collect();
        assert_eq!(ks_two_sample(&xs, &shifted), 1.0);
    }

    #[test]
    fn chi_square_exact_fit() {
        let out = chi_square(&[25, 25, 25, 25], &[0.25; 4]);
        assert_eq!(out.statistic, 0.0);
        assert!((out.p_value - 1.0).abs() < 1e-12);
        let out = chi_square(&[90, 10], &[0.5, 0.5]);
        assert!(out.p_value < 1e-10);
    }

    proptest! {
        #[test]
        fn kendall_fast_matches_pairs(raw in prop::collection::vec((0u32..1_000_000, 0u32..1_000_000), 2..60)) {
            let mut seen_x = std::collections::HashSet::new();
            let mut seen_y = std::collections::HashSet::new();
            let pairs: Vec<(f64, f64)> = raw.into_iter()
                .filter(|(a, b)| seen_x.insert(*a) && seen_y.insert(*b))
                .map(|(a, b)| (a as f64, b as f64)).collect();
            prop_assume!(pairs.len() >= 2);
            prop_assert!((kendall_tau(&pairs) - kendall_brute(&pairs)).abs() < 1e-12);
        }
    }
}
