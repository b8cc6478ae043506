//! Kneip–Utikal style baseline: principal components of the kernel density
//! estimates themselves, discretized on a uniform grid.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{DrmError, Result};
use crate::estimators::np_density;
use crate::fpca_basis::ZERO_EIGEN_RATIO;
use crate::kde::KdeEstimate;
use crate::multisample::MultiSample;
use crate::stats;

pub const DEFAULT_GRID: usize = 512;

/// Low-rank reconstruction `ḡ + Σ_j θ_rj φ_j` of the population densities.
#[derive(Debug, Clone)]
pub struct KuModel {
    grid: Vec<f64>,
    step: f64,
    mean_density: Vec<f64>,
    eigenvalues: Vec<f64>,
    phi: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    reconstructed: Vec<Vec<f64>>,
    kdes: Vec<KdeEstimate>,
    /// `coef[r][s]`: weight of the centered KDE `s` in population `r`'s
    /// reconstruction, for evaluation off the grid.
    coef: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KuSummary {
    pub l: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_size: usize,
    pub eigenvalues: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub min_density: Vec<f64>,
}

pub fn ku_fit(ms: &MultiSample, l: usize, grid_size: usize) -> Result<KuModel> {
    const OP: &str = "baselines::ku_fit";
    if grid_size < 2 {
        return Err(DrmError::usage(OP, "grid needs at least 2 points"));
    }
    let m1 = ms.num_populations();
    if l > m1.saturating_sub(1) && l > 0 {
        return Err(DrmError::rank(
            OP,
            format!("L = {l} exceeds the m = {} available components", m1 - 1),
        ));
    }
    let kdes: Vec<KdeEstimate> = ms.samples().iter().map(|s| np_density(s)).collect::<Result<_>>()?;
    let hmax = kdes.iter().map(KdeEstimate::bandwidth).fold(0.0, f64::max);
    let pooled = ms.pool();
    let lo = pooled.points()[0] - 3.0 * hmax;
    let hi = pooled.points()[pooled.len() - 1] + 3.0 * hmax;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|t| lo + t as f64 * step).collect();

    let dens: Vec<Vec<f64>> = kdes.iter().map(|k| grid.iter().map(|&x| k.eval(x)).collect()).collect();
    let mean_density: Vec<f64> = (0..grid_size).map(|t| dens.iter().map(|d| d[t]).sum::<f64>() / m1 as f64).collect();
    let centered: Vec<Vec<f64>> =
        dens.iter().map(|d| d.iter().zip(&mean_density).map(|(a, b)| a - b).collect()).collect();

    let gram = DMatrix::from_fn(m1, m1, |r, s| step * centered[r].iter().zip(&centered[s]).map(|(a, b)| a * b).sum::<f64>());
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 100_000)
        .ok_or_else(|| DrmError::numeric(OP, "eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..m1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let lead = eigenvalues[0];
    if l > 0 && (!(lead > 0.0) || !(eigenvalues[l - 1] > ZERO_EIGEN_RATIO * lead)) {
        return Err(DrmError::rank(
            OP,
            format!("L = {l} exceeds the numerical rank of the centered densities"),
        ));
    }

    let mut phi = Vec::with_capacity(l);
    let mut vecs = Vec::with_capacity(l);
    for &j in order.iter().take(l) {
        let v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let scale = eig.eigenvalues[j].sqrt();
        let f: Vec<f64> = (0..grid_size)
            .map(|t| v.iter().zip(&centered).map(|(a, c)| a * c[t]).sum::<f64>() / scale)
            .collect();
        phi.push(f);
        vecs.push((v, scale));
    }
    let theta: Vec<Vec<f64>> = centered
        .iter()
        .map(|c| phi.iter().map(|f| step * c.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()).collect())
        .collect();
    let reconstructed: Vec<Vec<f64>> = theta
        .iter()
        .map(|th| {
            (0..grid_size)
                .map(|t| mean_density[t] + th.iter().zip(&phi).map(|(a, f)| a * f[t]).sum::<f64>())
                .collect()
        })
        .collect();
    let coef: Vec<Vec<f64>> = theta
        .iter()
        .map(|th| {
            (0..m1)
                .map(|s| th.iter().zip(&vecs).map(|(a, (v, scale))| a * v[s] / scale).sum())
                .collect()
        })
        .collect();
    Ok(KuModel {
        grid,
        step,
        mean_density,
        eigenvalues,
        phi,
        theta,
        reconstructed,
        kdes,
        coef,
    })
}

impl KuModel {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn l(&self) -> usize {
        self.phi.len()
    }

    pub fn mean_density(&self) -> &[f64] {
        &self.mean_density
    }

    /// All eigenvalues of the Gram matrix, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    /// Reconstructed density of population `r` on the grid; may be negative.
    pub fn reconstructed(&self, r: usize) -> &[f64] {
        &self.reconstructed[r]
    }

    pub fn num_populations(&self) -> usize {
        self.reconstructed.len()
    }

    /// Reconstructed density of population `r` at any `x`, from the KDEs.
    pub fn eval(&self, r: usize, x: f64) -> f64 {
        let vals: Vec<f64> = self.kdes.iter().map(|k| k.eval(x)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        mean + self.coef[r].iter().zip(&vals).map(|(c, v)| c * (v - mean)).sum::<f64>()
    }

    pub fn summary(&self) -> KuSummary {
        KuSummary {
            l: self.l(),
            grid_lo: self.grid[0],
            grid_hi: self.grid[self.grid.len() - 1],
            grid_size: self.grid.len(),
            eigenvalues: self.eigenvalues.clone(),
            theta: self.theta.clone(),
            min_density: self.reconstructed.iter().map(|d| d.iter().copied().fold(f64::INFINITY, f64::min)).collect(),
        }
    }
}

/// Quantile of the reconstructed density: trapezoid CDF on the grid, made
/// monotone by a running maximum, normalized by its final value, and
/// inverted by the inf rule with linear interpolation between grid points.
pub fn ku_quantile(model: &KuModel, r: usize, tau: f64) -> Result<f64> {
    stats::check_level("baselines::ku_quantile", tau)?;
    if r >= model.num_populations() {
        return Err(DrmError::usage("baselines::ku_quantile", format!("population {r} out of range")));
    }
    let cdf = model.monotone_cdf(r)?;
    let i = cdf.partition_point(|&c| c < tau);
    if i == 0 {
        return Ok(model.grid[0]);
    }
    if i >= cdf.len() {
        return Ok(model.grid[model.grid.len() - 1]);
    }
    let (c0, c1) = (cdf[i - 1], cdf[i]);
    let frac = if c1 > c0 { (tau - c0) / (c1 - c0) } else { 1.0 };
    Ok(model.grid[i - 1] + frac * model.step)
}

impl KuModel {
    fn monotone_cdf(&self, r: usize) -> Result<Vec<f64>> {
        let d = &self.reconstructed[r];
        let mut cdf = Vec::with_capacity(d.len());
        let (mut acc, mut env) = (0.0, 0.0f64);
        cdf.push(0.0);
        for t in 1..d.len() {
            acc += 0.5 * self.step * (d[t - 1] + d[t]);
            env = env.max(acc);
            cdf.push(env);
        }
        let mass = env;
        if !(mass >= 0.99) {
            return Err(DrmError::Mass { mass });
        }
        Ok(cdf.into_iter().map(|c| c / mass).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread_sample(n: usize, shift: f64, scale: f64) -> Vec<f64> {
        // Deterministic quasi-normal draws via the inverse CDF on a lattice.
        use statrs::distribution::{ContinuousCDF, Normal};
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|i| shift + scale * z.inverse_cdf((i as f64 + 0.5) / n as f64)).collect()
    }

    #[test]
    fn grid_orthonormal_and_parseval() {
        let ms = MultiSample::new(vec![
            spread_sample(80, 0.0, 1.0),
            spread_sample(70, 0.5, 1.2),
            spread_sample(90, -0.3, 0.8),
            spread_sample(60, 0.2, 1.0),
        ])
        .unwrap();
        let model = ku_fit(&ms, 2, 512).unwrap();
        let dx = model.step();
        for i in 0..2 {
            for j in 0..2 {
                let ip: f64 = dx * model.phi()[i].iter().zip(&model.phi()[j]).map(|(a, b)| a * b).sum::<f64>();
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        let mut resid = 0.0;
        for r in 0..4 {
            for t in 0..model.grid().len() {
                let truth = model.kdes[r].eval(model.grid()[t]);
                let e = truth - model.reconstructed(r)[t];
                resid += dx * e * e;
            }
        }
        let discarded: f64 = model.eigenvalues()[2..].iter().sum();
        assert!((resid - discarded).abs() < 1e-8);
    }

    #[test]
    fn gram_route_matches_direct_grid_pca() {
        let ms = MultiSample::new(vec![
            spread_sample(60, 0.0, 1.0),
            spread_sample(60, 0.7, 1.1),
            spread_sample(60, -0.4, 0.9),
        ])
        .unwrap();
        let model = ku_fit(&ms, 1, 300).unwrap();
        let g = model.grid().len();
        let dens: Vec<Vec<f64>> = (0..3).map(|r| model.grid().iter().map(|&x| model.kdes[r].eval(x)).collect()).collect();
        let c = DMatrix::from_fn(3, g, |r, t| dens[r][t] - model.mean_density()[t]);
        let svd = c.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let lead = (0..svd.singular_values.len())
            .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        let v = vt.row(lead);
        for r in 0..3 {
            let proj: f64 = c.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for t in 0..g {
                let want = model.mean_density()[t] + proj * v[t];
                assert!((want - model.reconstructed(r)[t]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn off_grid_eval_matches_grid() {
        let ms = MultiSample::new(vec![spread_sample(50, 0.0, 1.0), spread_sample(50, 1.0, 1.0), spread_sample(40, 0.0, 2.0)])
            .unwrap();
        let model = ku_fit(&ms, 1, 256).unwrap();
        for t in (0..256).step_by(17) {
            for r in 0..3 {
                assert!((model.eval(r, model.grid()[t]) - model.reconstructed(r)[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_errors() {
        let s = spread_sample(30, 0.0, 1.0);
        let ms = MultiSample::new(vec![s.clone(), s]).unwrap();
        assert!(matches!(ku_fit(&ms, 1, 128), Err(DrmError::RankDeficient { .. })));
        let single = MultiSample::single(spread_sample(30, 0.0, 1.0)).unwrap();
        assert!(matches!(ku_fit(&single, 1, 128), Err(DrmError::RankDeficient { .. })));
    }

    #[test]
    fn mean_only_quantiles() {
        let single = MultiSample::single(spread_sample(2000, 0.0, 1.0)).unwrap();
        let model = ku_fit(&single, 0, 512).unwrap();
        assert!(ku_quantile(&model, 0, 0.5).unwrap().abs() < 0.05);
        let lo = ku_quantile(&model, 0, 1e-12).unwrap();
        assert!((lo - model.grid()[0]).abs() <= model.step());
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let q = ku_quantile(&model, 0, i as f64 / 100.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }
}
