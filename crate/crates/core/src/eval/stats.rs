//! Exact sign test, two-sample Kolmogorov–Smirnov test, and the
//! coefficient of variation of predictive samples.

use serde::{Deserialize, Serialize};

use super::rollout::RolloutRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// Paired differences tend to be positive.
    Greater,
    /// Paired differences tend to be negative.
    Less,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `P(X ≥ k)` for `X ~ Binomial(m, 1/2)`, summed in log space.
pub fn binomial_upper_tail(m: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m {
        return 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    // ln C(m, k)
    let mut term = (1..=k).map(|i| ((m - k + i) as f64 / i as f64).ln()).sum::<f64>();
    let mut acc = f64::NEG_INFINITY;
    for j in k..=m {
        acc = log_sum_exp(acc, term);
        if j < m {
            term += ((m - j) as f64 / (j + 1) as f64).ln();
        }
    }
    (acc - m as f64 * ln2).exp().min(1.0)
}

/// One-sided exact sign test on paired differences; zeros are dropped.
pub fn sign_test(diffs: &[f64], alternative: Alternative) -> Result<f64> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("sign test on non-finite differences".into()));
    }
    let pos = diffs.iter().filter(|&&d| d > 0.0).count();
    let neg = diffs.iter().filter(|&&d| d < 0.0).count();
    let m = pos + neg;
    if m == 0 {
        return Err(Error::UndefinedTest);
    }
    Ok(match alternative {
        Alternative::Greater => binomial_upper_tail(m, pos),
        Alternative::Less => binomial_upper_tail(m, neg),
    })
}

/// Supremum distance between the empirical CDFs of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-λ series of the CDF, which converges fast there
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let f = -std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| ((2 * k - 1) as f64).powi(2) * f).map(f64::exp).sum();
        (1.0 - c * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let t = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            s += if k % 2 == 1 { t } else { -t };
            if t < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample KS test: the statistic and its asymptotic p-value with
/// effective size `n₁n₂/(n₁+n₂)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate(format!("KS test needs two samples of size >= 2, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("KS test on non-finite values".into()));
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok((d, kolmogorov_q(ne.sqrt() * d)))
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean.abs() < 1e-12 {
        return None;
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovSeries {
    pub values: Vec<f64>,
    /// Steps skipped because their sample mean was zero.
    pub skipped: usize,
}

/// One CoV per step per record, over each step's predictive samples.
pub fn cov_series(records: &[RolloutRecord]) -> Result<CovSeries> {
    let mut out = CovSeries::default();
    for r in records {
        if r.samples.is_empty() {
            return Err(Error::Degenerate(format!("{} rollout {} carries no predictive samples", r.policy, r.index)));
        }
        for s in &r.samples {
            match coefficient_of_variation(s) {
                Some(c) => out.values.push(c),
                None => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_hand_values() {
        let ten_pos = [1.0; 10];
        assert!((sign_test(&ten_pos, Alternative::Greater).unwrap() - 2f64.powi(-10)).abs() < 1e-15);
        assert_eq!(sign_test(&ten_pos, Alternative::Less).unwrap(), 1.0);
        let mixed: Vec<f64> = (0..10).map(|k| if k < 5 { 1.0 } else { -1.0 }).collect();
        assert!((sign_test(&mixed, Alternative::Greater).unwrap() - 638.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test(&[3.0, 0.0], Alternative::Greater).unwrap(), 0.5);
        assert!(matches!(sign_test(&[0.0, 0.0], Alternative::Less), Err(Error::UndefinedTest)));
    }

    #[test]
    fn large_sample_tails_stay_finite() {
        let p = binomial_upper_tail(1000, 900);
        assert!(p > 0.0 && p < 1e-100);
        assert!((binomial_upper_tail(2001, 1001) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_basics() {
        let a = [1.0, 2.0, 3.0];
        let (d, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!((d, p), (0.0, 1.0));
        let (d, _) = ks_two_sample(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(d, 1.0);
        assert!(ks_two_sample(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn kolmogorov_branches_meet() {
        let lo = kolmogorov_q(1.18 - 1e-9);
        let hi = kolmogorov_q(1.18 + 1e-9);
        assert!((lo - hi).abs() < 1e-8, "{lo} vs {hi}");
        // tabulated critical value: P(K > 1.3581) ≈ 0.05
        assert!((kolmogorov_q(1.358_1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn cov_values() {
        assert_eq!(coefficient_of_variation(&[4.0, 4.0]), Some(0.0));
        assert_eq!(coefficient_of_variation(&[1.0, 3.0]), Some(0.5));
        assert_eq!(coefficient_of_variation(&[-1.0, 1.0]), None);
    }
}
