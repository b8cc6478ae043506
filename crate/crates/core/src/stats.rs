//! Small descriptive-statistics helpers shared by the estimators.

use crate::error::{DrmError, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sd(x: &[f64]) -> f64 {
    let mu = mean(x);
    let ss: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Type-7 quantile of an ascending slice: linear interpolation between
/// order statistics at 1-based position `1 + (n - 1) p`.
pub fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn iqr_type7(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_type7_sorted(&s, 0.75) - quantile_type7_sorted(&s, 0.25)
}

/// Generalized inverse `inf { t : F(t) >= tau }` of the step CDF with the
/// given masses on ascending support points.
pub fn inf_quantile(sorted: &[f64], masses: &[f64], tau: f64) -> f64 {
    let mut cum = 0.0;
    for (x, w) in sorted.iter().zip(masses) {
        cum += w;
        if cum >= tau {
            return *x;
        }
    }
    sorted[sorted.len() - 1]
}

/// Same rule applied to a precomputed running sum.
pub fn inf_quantile_cumulative(sorted: &[f64], cumulative: &[f64], tau: f64) -> f64 {
    let i = cumulative.partition_point(|&c| c < tau);
    sorted[i.min(sorted.len() - 1)]
}

pub fn check_level(op: &'static str, tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(DrmError::domain(op, format!("level {tau} outside (0, 1)")))
    }
}

/// Weighted summary of a discrete distribution, generalizing the unweighted
/// conventions: variance uses the effective-sample-size correction
/// `Σw(x-μ)² / (1 - Σw²)` on normalized weights, and quantiles place the
/// `i`-th point at `S_{i-1} / S_{n-1}` (left cumulative mass). Both reduce
/// to the `n - 1` divisor and type-7 rule under equal weights.
pub struct WeightedSummary {
    pub mean: f64,
    pub sd: f64,
    pub iqr: f64,
}

pub fn weighted_summary(sorted: &[f64], weights: &[f64]) -> WeightedSummary {
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
    let mu: f64 = sorted.iter().zip(&w).map(|(x, w)| w * x).sum();
    let ss: f64 = sorted.iter().zip(&w).map(|(x, w)| w * (x - mu) * (x - mu)).sum();
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let var = if w2 < 1.0 { ss / (1.0 - w2) } else { 0.0 };

    let n = sorted.len();
    let mut pos = Vec::with_capacity(n);
    let mut left = 0.0;
    for wi in &w {
        pos.push(left);
        left += wi;
    }
    let last = pos[n - 1];
    let q = |p: f64| -> f64 {
        if n == 1 || last <= 0.0 {
            return sorted[0];
        }
        let target = p * last;
        let i = pos.partition_point(|&s| s <= target);
        if i == 0 {
            return sorted[0];
        }
        if i >= n {
            return sorted[n - 1];
        }
        let (s0, s1) = (pos[i - 1], pos[i]);
        let frac = (target - s0) / (s1 - s0);
        sorted[i - 1] + frac * (sorted[i] - sorted[i - 1])
    };
    WeightedSummary {
        mean: mu,
        sd: var.sqrt(),
        iqr: q(0.75) - q(0.25),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_hand_values() {
        let s = [0.0, 1.0];
        assert_eq!(quantile_type7_sorted(&s, 0.25), 0.25);
        assert_eq!(quantile_type7_sorted(&s, 0.75), 0.75);
        assert_eq!(iqr_type7(&[4.0, 1.0, 3.0, 2.0, 5.0]), 2.0);
    }

    #[test]
    fn inf_rule() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let w = [0.2; 5];
        assert_eq!(inf_quantile(&s, &w, 0.5), 3.0);
        assert_eq!(inf_quantile(&s, &w, 0.2), 1.0);
        let s4 = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(inf_quantile(&s4, &[0.25; 4], 0.5), 2.0);
    }

    #[test]
    fn weighted_summary_reduces_under_equal_weights() {
        let x = [0.3, 1.1, 1.7, 2.0, 2.9, 4.4, 5.0];
        let w = [1.0 / 7.0; 7];
        let s = weighted_summary(&x, &w);
        assert!((s.sd - sd(&x)).abs() < 1e-14);
        assert!((s.iqr - iqr_type7(&x)).abs() < 1e-14);
    }

    #[test]
    fn weighted_quantile_positions_are_monotone() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let s = weighted_summary(&x, &[0.7, 0.1, 0.1, 0.1]);
        assert!(s.iqr > 0.0 && s.iqr < 3.0);
    }
}
