//! Small numerical helpers shared across the pipeline.
//!
//! Every empirical quantile in the crate goes through [`empirical_quantile`], so the
//! interpolation rule is defined in exactly one place.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Empirical quantile with linear interpolation between order statistics.
///
/// The (1-based) rank is `1 + alpha * (n - 1)`; fractional ranks interpolate between the two
/// neighbouring sorted values. NaNs are not allowed in `values`.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "empirical quantile of an empty sample".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, alpha))
}

/// Same as [`empirical_quantile`] on a slice that is already sorted ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let pos = alpha.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation with the `n - 1` denominator. `None` below two observations.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

/// Median of a sample (`None` when empty).
pub fn median(values: &[f64]) -> Option<f64> {
    empirical_quantile(values, 0.5).ok()
}

/// Asymmetric quantile loss: `alpha * (y - q)` above the quantile, `(1 - alpha) * (q - y)` below.
pub fn pinball_loss(y: f64, q: f64, alpha: f64) -> f64 {
    if y >= q {
        alpha * (y - q)
    } else {
        (1.0 - alpha) * (q - y)
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}

/// Inverse CDF of the standard Student-t distribution with `nu` degrees of freedom.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .map(|t| t.inverse_cdf(p))
        .unwrap_or(f64::NAN)
}
