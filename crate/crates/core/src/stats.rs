//! Summary statistics and the hypothesis tests used by the statistical suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::loads::compensated_sum;

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Population standard deviation (divisor `n`).
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / xs.len() as f64).sqrt()
}

/// Sample standard deviation (divisor `n - 1`); zero for a single value.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// `P(T >= t)` under the null of equal means, i.e. evidence for `mean(a) > mean(b)`.
    pub p_greater: f64,
}

/// Welch's unequal-variance t-test for `mean(a) > mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_std(a).powi(2) / na, sample_std(b).powi(2) / nb);
    let diff = mean(a) - mean(b);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        let p = if diff > 0.0 { 0.0 } else { 1.0 };
        return WelchTest {
            t: diff.signum() * f64::INFINITY,
            dof: na + nb - 2.0,
            p_greater: p,
        };
    }
    let t = diff / se;
    let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    WelchTest {
        t,
        dof,
        p_greater: dist.sf(t),
    }
}

/// Pearson chi-square goodness of fit; returns `(statistic, p_value)`.
/// Cells with zero expectation must have zero counts and are dropped.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), probabilities.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probabilities) {
        let e = p * total as f64;
        if e == 0.0 {
            assert_eq!(o, 0, "count in a cell of probability zero");
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return (stat, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    (stat, dist.sf(stat))
}

/// Two-sample Kolmogorov-Smirnov test; returns `(D, asymptotic p_value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Proportion {
    let nf = trials as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    }
}

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[4.0, 6.0]), 5.0);
        assert_eq!(population_std(&[4.0, 6.0]), 1.0);
        assert_eq!(population_std(&[3.0]), 0.0);
        assert!((sample_std(&[4.0, 6.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.5), 2.5);
    }

    #[test]
    fn welch_reference_value() {
        // scipy.stats.ttest_ind(a, b, equal_var=False, alternative="greater")
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
        let w = welch_t_test(&a, &b);
        assert!((w.t - (-2.46)).abs() < 0.01, "t = {}", w.t);
        assert!((w.dof - 24.99).abs() < 0.05, "dof = {}", w.dof);
        let w = welch_t_test(&b, &a);
        assert!((w.p_greater - 0.0106).abs() < 5e-4, "p = {}", w.p_greater);
    }

    #[test]
    fn chi_square_reference_value() {
        let (stat, p) = chi_square_gof(&[10, 20, 30, 40], &[0.25; 4]);
        assert!((stat - 20.0).abs() < 1e-12);
        // 1 - CDF_{chi2(3)}(20) = 1.6974e-4
        assert!((p - 1.6974e-4).abs() < 1e-7, "p = {p}");
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = (1000..1100).map(f64::from).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn kolmogorov_reference_value() {
        // P(K > 1.36) ~= 0.0495
        assert!((kolmogorov_sf(1.36) - 0.0495).abs() < 5e-4);
    }

    #[test]
    fn wilson_reference_value() {
        let w = wilson_interval(81, 263, Z_95);
        assert!((w.lower - 0.2553).abs() < 1e-3, "{w:?}");
        assert!((w.upper - 0.3662).abs() < 1e-3, "{w:?}");
        let all = wilson_interval(10, 10, Z_95);
        assert!((all.upper - 1.0).abs() < 1e-12);
        assert!(all.lower > 0.6);
    }
}
