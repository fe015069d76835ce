use crate::error::{Error, Result};

/// p-Wasserstein distance between the point mass at `target` and the
/// uniform empirical measure on `samples`:
/// `(1/n Σ |s_i − target|^p)^(1/p)`.
///
/// Against a point mass the only coupling moves every atom to `target`,
/// which is why the closed form is exact.
pub fn wasserstein_penalty(target: f64, samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("Wasserstein order must be >= 1, got {p}")));
    }
    let n = samples.len() as f64;
    Ok(if p == 1.0 {
        samples.iter().map(|s| (s - target).abs()).sum::<f64>() / n
    } else if p == 2.0 {
        (samples.iter().map(|s| (s - target).powi(2)).sum::<f64>() / n).sqrt()
    } else {
        (samples.iter().map(|s| (s - target).abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(wasserstein_penalty(10.0, &[10.0], 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_penalty(10.0, &[8.0, 12.0], 1.0).unwrap(), 2.0);
        assert_eq!(wasserstein_penalty(10.0, &[8.0, 12.0], 2.0).unwrap(), 2.0);
        assert!((wasserstein_penalty(0.0, &[1.0, 2.0], 3.0).unwrap() - 4.5f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_bad_order() {
        assert!(matches!(wasserstein_penalty(1.0, &[], 1.0), Err(Error::EmptySamples)));
        assert!(wasserstein_penalty(1.0, &[1.0], 0.5).is_err());
    }
}
