//! Quantile and density estimators built on a DRM fit, and their
//! nonparametric counterparts.

use crate::el_drm::DrmFit;
use crate::error::{DrmError, Result};
use crate::kde::{silverman_bandwidth, KdeEstimate};
use crate::kernel::{self, LN_SQRT_2PI};
use crate::stats;

/// `inf { t : Ĝ_r(t) >= τ }` over the pooled points.
pub fn drm_quantile(fit: &DrmFit, r: usize, tau: f64) -> Result<f64> {
    stats::check_level("estimators::drm_quantile", tau)?;
    check_population(fit, r, "estimators::drm_quantile")?;
    Ok(stats::inf_quantile_cumulative(fit.points(), fit.cumulative(r), tau))
}

/// `inf { t : F_n(t) >= τ }` for one sample.
pub fn empirical_quantile(sample: &[f64], tau: f64) -> Result<f64> {
    stats::check_level("estimators::empirical_quantile", tau)?;
    if sample.is_empty() {
        return Err(DrmError::degenerate("estimators::empirical_quantile", "empty sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let w = 1.0 / sorted.len() as f64;
    let mut acc = 0.0;
    let cumulative: Vec<f64> = sorted
        .iter()
        .map(|_| {
            acc += w;
            acc
        })
        .collect();
    Ok(stats::inf_quantile_cumulative(&sorted, &cumulative, tau))
}

fn check_population(fit: &DrmFit, r: usize, op: &'static str) -> Result<()> {
    if r >= fit.num_populations() {
        return Err(DrmError::usage(op, format!("population {r} out of range 0..{}", fit.num_populations())));
    }
    Ok(())
}

/// Silverman's rule applied to a discrete distribution with masses
/// `weights` on ascending `points`; `n` sets the `n^{-1/5}` rate.
pub fn weighted_silverman(points: &[f64], weights: &[f64], n: usize) -> Result<f64> {
    const OP: &str = "estimators::drm_density";
    let s = stats::weighted_summary(points, weights);
    if !(s.sd > 0.0) {
        return Err(DrmError::degenerate(OP, "fitted distribution has zero spread"));
    }
    let spread = if s.iqr > 0.0 { s.sd.min(s.iqr / 1.34) } else { s.sd };
    Ok(0.9 * (n as f64).powf(-0.2) * spread)
}

/// DRM-smoothed density `(1/h') Σ_i w_{r,i} K((x - x_i)/h')` with `h'`
/// from Silverman's rule on the fitted `Ĝ_r`.
#[derive(Debug, Clone)]
pub struct DrmDensity {
    points: Vec<f64>,
    weights: Vec<f64>,
    h: f64,
    /// Equal weights make this an ordinary KDE.
    plain: Option<KdeEstimate>,
}

impl DrmDensity {
    pub fn new(fit: &DrmFit, r: usize) -> Result<Self> {
        check_population(fit, r, "estimators::drm_density")?;
        Self::from_weights(fit.points(), fit.masses(r), fit.counts()[r])
    }

    /// `points` ascending, `weights` summing to one.
    pub fn from_weights(points: &[f64], weights: &[f64], n: usize) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(DrmError::usage("estimators::drm_density", "points and weights differ in length"));
        }
        if weights.iter().all(|&w| w == weights[0]) {
            let h = silverman_bandwidth(points)?;
            let kde = KdeEstimate::fit(points, h, None, points.len())?;
            return Ok(Self {
                points: points.to_vec(),
                weights: weights.to_vec(),
                h,
                plain: Some(kde),
            });
        }
        let h = weighted_silverman(points, weights, n)?;
        Ok(Self {
            points: points.to_vec(),
            weights: weights.to_vec(),
            h,
            plain: None,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.plain {
            Some(k) => k.eval(x),
            None => {
                kernel::weighted_gauss_sum(x, &self.points, &self.weights, self.h) * (-LN_SQRT_2PI).exp() / self.h
            }
        }
    }

    /// Support range widened by `pad` bandwidths.
    pub fn range(&self, pad: f64) -> (f64, f64) {
        (self.points[0] - pad * self.h, self.points[self.points.len() - 1] + pad * self.h)
    }
}

pub fn drm_density(fit: &DrmFit, r: usize, x: f64) -> Result<f64> {
    Ok(DrmDensity::new(fit, r)?.eval(x))
}

/// Nonparametric density estimate: Silverman-bandwidth KDE of one sample.
pub fn np_density(sample: &[f64]) -> Result<KdeEstimate> {
    let h = silverman_bandwidth(sample)?;
    KdeEstimate::fit(sample, h, None, sample.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::FixedBasis;
    use crate::el_drm::fit_drm;
    use crate::multisample::MultiSample;
    use crate::quadrature::trapezoid;

    #[test]
    fn inf_rule_quantiles() {
        let ms = MultiSample::single(vec![5.0, 3.0, 1.0, 2.0, 4.0]).unwrap();
        let fit = fit_drm(&ms, &FixedBasis::parse("x").unwrap()).unwrap();
        assert_eq!(drm_quantile(&fit, 0, 0.5).unwrap(), 3.0);
        assert_eq!(drm_quantile(&fit, 0, 0.2).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert!(empirical_quantile(&[1.0, 2.0], 1.0).is_err());
        assert!(drm_quantile(&fit, 0, 0.0).is_err());
    }

    #[test]
    fn weighted_density_matches_direct_sum() {
        let pts = [0.0, 0.4, 1.0, 2.5];
        let w = [0.7, 0.1, 0.1, 0.1];
        let d = DrmDensity::from_weights(&pts, &w, 4).unwrap();
        let h = d.bandwidth();
        for &x in &[-0.5, 0.0, 0.3, 1.7] {
            let want: f64 = pts.iter().zip(&w).map(|(p, w)| w * crate::kernel::phi((x - p) / h) / h).sum();
            assert!((d.eval(x) - want).abs() < 1e-13 * want);
        }
    }

    #[test]
    fn fitted_density_integrates_to_one() {
        let a: Vec<f64> = (0..60).map(|i| (i as f64 * 0.61).sin() * 2.0).collect();
        let b: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.37).cos() * 1.5).collect();
        let ms = MultiSample::new(vec![a, b]).unwrap();
        let fit = fit_drm(&ms, &FixedBasis::parse("x").unwrap()).unwrap();
        for r in 0..2 {
            let d = DrmDensity::new(&fit, r).unwrap();
            let (lo, hi) = d.range(10.0);
            let step = (hi - lo) / 4095.0;
            let vals: Vec<f64> = (0..4096).map(|i| d.eval(lo + i as f64 * step)).collect();
            assert!((trapezoid(&vals, step) - 1.0).abs() < 1e-6);
        }
    }
}
