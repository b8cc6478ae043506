//! Gaussian kernel density estimation, bandwidth rules, and the
//! eigen-matching bandwidth search.
//!
//! Densities are evaluated in the log domain. The optional floor clamps the
//! estimate from below at `C (log N / N)^{2/5}`; it is off unless requested.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{DrmError, Result};
use crate::fpca_basis::{self, LogRatioSet};
use crate::kernel::{self, LN_SQRT_2PI};
use crate::multisample::{MultiSample, PooledEmpirical};
use crate::stats;

/// `h = 0.9 n^{-1/5} min{σ̂, IQR/1.34}` with the `n - 1` standard deviation
/// and the type-7 interquartile range.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    const OP: &str = "kde::silverman_bandwidth";
    if sample.len() < 2 {
        return Err(DrmError::degenerate(OP, "need at least 2 observations"));
    }
    let sd = stats::sd(sample);
    if !(sd > 0.0) {
        return Err(DrmError::degenerate(OP, "zero spread"));
    }
    let iqr = stats::iqr_type7(sample);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * (sample.len() as f64).powf(-0.2) * spread)
}

/// `h = k n^{-1/5} σ̂`.
pub fn scaled_bandwidth(sample: &[f64], k: f64) -> Result<f64> {
    const OP: &str = "kde::scaled_bandwidth";
    if !(k > 0.0) || !k.is_finite() {
        return Err(DrmError::domain(OP, format!("scale factor must be positive, got {k}")));
    }
    if sample.len() < 2 {
        return Err(DrmError::degenerate(OP, "need at least 2 observations"));
    }
    let sd = stats::sd(sample);
    if !(sd > 0.0) {
        return Err(DrmError::degenerate(OP, "zero spread"));
    }
    Ok(k * (sample.len() as f64).powf(-0.2) * sd)
}

/// Kernel density estimate of one sample with a standard normal kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeEstimate {
    sample: Vec<f64>,
    h: f64,
    floor: Option<f64>,
}

impl KdeEstimate {
    /// `floor_constant` is `C_r`; the clamp value is `C_r (log N/N)^{2/5}`
    /// with `N = n_total`.
    pub fn fit(sample: &[f64], h: f64, floor_constant: Option<f64>, n_total: usize) -> Result<Self> {
        const OP: &str = "kde::kde_fit";
        if !(h > 0.0) || !h.is_finite() {
            return Err(DrmError::domain(OP, format!("bandwidth must be positive, got {h}")));
        }
        if sample.is_empty() {
            return Err(DrmError::degenerate(OP, "empty sample"));
        }
        let floor = match floor_constant {
            None => None,
            Some(c) if c > 0.0 && c.is_finite() => {
                let n = n_total as f64;
                Some(c * (n.ln() / n).powf(0.4))
            }
            Some(c) => return Err(DrmError::domain(OP, format!("floor constant must be positive, got {c}"))),
        };
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sample: sorted, h, floor })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Clamp value, when the floor is active.
    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    /// Log of the unfloored estimate.
    pub fn ln_eval_raw(&self, x: f64) -> f64 {
        let n = self.sample.len() as f64;
        kernel::log_gauss_sum(x, &self.sample, self.h) - (n * self.h).ln() - LN_SQRT_2PI
    }

    pub fn ln_eval(&self, x: f64) -> f64 {
        let raw = self.ln_eval_raw(x);
        match self.floor {
            Some(f) => raw.max(f.ln()),
            None => raw,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }
}

/// How the floor constant `C_r` is chosen when the floor is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FloorPolicy {
    #[default]
    Off,
    /// `C_r = 0.1 / (n_r h_r)`.
    Auto,
    Constant(f64),
}

impl FloorPolicy {
    pub fn constant(&self, n_r: usize, h_r: f64) -> Option<f64> {
        match *self {
            FloorPolicy::Off => None,
            FloorPolicy::Auto => Some(0.1 / (n_r as f64 * h_r)),
            FloorPolicy::Constant(c) => Some(c),
        }
    }
}

/// Builds one KDE per population with the given bandwidths.
pub fn fit_all(ms: &MultiSample, bandwidths: &[f64], floor: FloorPolicy) -> Result<Vec<KdeEstimate>> {
    let total = ms.total();
    ms.samples()
        .iter()
        .zip(bandwidths)
        .map(|(s, &h)| KdeEstimate::fit(s, h, floor.constant(s.len(), h), total))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceFamily {
    Normal,
    Gamma,
}

impl FromStr for ReferenceFamily {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Self::Normal),
            "gamma" => Ok(Self::Gamma),
            other => Err(DrmError::usage("kde::fit_reference", format!("unknown family {other:?}"))),
        }
    }
}

/// Moment-fitted parametric reference density for one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReferenceParams {
    Normal { mean: f64, variance: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl ReferenceParams {
    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            ReferenceParams::Normal { mean, variance } => {
                let z = x - mean;
                -0.5 * z * z / variance - 0.5 * variance.ln() - LN_SQRT_2PI
            }
            ReferenceParams::Gamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
            }
        }
    }
}

pub fn fit_reference(ms: &MultiSample, family: ReferenceFamily) -> Result<Vec<ReferenceParams>> {
    const OP: &str = "kde::fit_reference";
    ms.samples()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mean = stats::mean(s);
            let sd = stats::sd(s);
            let variance = sd * sd;
            if !(variance > 0.0) {
                return Err(DrmError::degenerate(OP, format!("population {k} has zero variance")));
            }
            match family {
                ReferenceFamily::Normal => Ok(ReferenceParams::Normal { mean, variance }),
                ReferenceFamily::Gamma => {
                    if s.iter().any(|&x| x <= 0.0) {
                        return Err(DrmError::domain(
                            OP,
                            format!("gamma reference needs positive data; population {k} has a nonpositive value"),
                        ));
                    }
                    Ok(ReferenceParams::Gamma {
                        shape: mean * mean / variance,
                        scale: variance / mean,
                    })
                }
            }
        })
        .collect()
}

/// Leading eigenpairs of the parametric `M` matrix, with eigenfunctions
/// tabulated at the pooled points.
#[derive(Debug, Clone)]
pub struct ReferenceEigensystem {
    pub lambdas: Vec<f64>,
    /// `psi[j][i] = ψ_j(x_i)` at the pooled points.
    pub psi: Vec<Vec<f64>>,
}

pub fn reference_eigensystem(
    pooled: &PooledEmpirical,
    params: &[ReferenceParams],
    d_ref: usize,
) -> Result<ReferenceEigensystem> {
    const OP: &str = "kde::reference_eigensystem";
    let owned = params.to_vec();
    let lr = LogRatioSet::from_log_density_fn(pooled, params.len(), move |k, x| owned[k].ln_density(x))?;
    let eig = fpca_basis::eigensystem(&fpca_basis::m_hat(&lr))?;
    let lambdas: Vec<f64> = eig.values.iter().take(d_ref).copied().collect();
    let lead = eig.values.first().copied().unwrap_or(0.0);
    if lambdas.len() < d_ref || !(lead > 0.0) || lambdas.iter().any(|&l| !(l > fpca_basis::ZERO_EIGEN_RATIO * lead)) {
        return Err(DrmError::rank(
            OP,
            format!("fewer than {d_ref} nonzero reference eigenvalues: {:?}", eig.values),
        ));
    }
    let psi = (0..d_ref).map(|j| lr.psi_at_pooled(&eig, j)).collect();
    Ok(ReferenceEigensystem { lambdas, psi })
}

/// Grid of scale factors `k` in `h_r = k n_r^{-1/5} σ̂_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrid(Vec<f64>);

impl KGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        const OP: &str = "kde::select_bandwidth";
        if values.is_empty() {
            return Err(DrmError::usage(OP, "empty k grid"));
        }
        if values.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return Err(DrmError::usage(OP, "k grid values must be positive"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DrmError::usage(OP, "k grid must be strictly increasing"));
        }
        Ok(Self(values))
    }

    /// `lo, lo + step, …` up to `hi` inclusive (with a small tolerance).
    pub fn range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(DrmError::usage("kde::select_bandwidth", "grid needs lo <= hi and step > 0"));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let values = (0..count).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for KGrid {
    fn default() -> Self {
        Self::range(0.3, 3.0, 0.1).expect("default grid is valid")
    }
}

impl FromStr for KGrid {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| DrmError::usage("kde::select_bandwidth", format!("bad grid spec {s:?}; expected lo:hi:step")))
        };
        if parts.len() != 3 {
            return Err(DrmError::usage("kde::select_bandwidth", format!("bad grid spec {s:?}; expected lo:hi:step")));
        }
        Self::range(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
    }
}

/// Objective value (or failure) for every grid candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthSearch {
    pub k_grid: Vec<f64>,
    pub family: ReferenceFamily,
    pub objective: Vec<Option<f64>>,
    pub failures: Vec<(f64, String)>,
}

/// Outcome of the search: the winning `k`, its bandwidths, and the log
/// ratios already computed for it.
#[derive(Debug, Clone)]
pub struct BandwidthChoice {
    pub k: f64,
    pub bandwidths: Vec<f64>,
    pub search: BandwidthSearch,
    pub log_ratios: LogRatioSet,
}

/// Index of the smallest value; ties go to the lowest index. `None` entries
/// are skipped.
pub fn argmin_first(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// `Σ_j min_± ∫ [λ̂_j^{-1/2} (±ψ̂_j) - λ_j^{-1/2} ψ_j]² dF̄_n`.
pub(crate) fn matching_objective(
    est_lambdas: &[f64],
    est_psi: &[Vec<f64>],
    reference: &ReferenceEigensystem,
) -> f64 {
    let mut total = 0.0;
    for j in 0..reference.lambdas.len() {
        let a = est_lambdas[j].sqrt().recip();
        let b = reference.lambdas[j].sqrt().recip();
        let n = est_psi[j].len() as f64;
        let (mut plus, mut minus) = (0.0, 0.0);
        for (e, r) in est_psi[j].iter().zip(&reference.psi[j]) {
            let dp = a * e - b * r;
            let dm = -a * e - b * r;
            plus += dp * dp;
            minus += dm * dm;
        }
        total += plus.min(minus) / n;
    }
    total
}

/// Grid search for the bandwidth scale whose estimated eigensystem best
/// matches the eigensystem of moment-fitted parametric references.
pub fn select_bandwidth(
    ms: &MultiSample,
    family: ReferenceFamily,
    k_grid: &KGrid,
    floor: FloorPolicy,
) -> Result<BandwidthChoice> {
    const OP: &str = "kde::select_bandwidth";
    let pooled = ms.pool();
    let params = fit_reference(ms, family)?;
    let d_ref = 2.min(ms.m());
    let reference = reference_eigensystem(&pooled, &params, d_ref)?;

    let candidates: Vec<Result<(f64, Vec<f64>, LogRatioSet)>> = k_grid
        .values()
        .par_iter()
        .map(|&k| {
            let bandwidths: Vec<f64> = ms
                .samples()
                .iter()
                .map(|s| scaled_bandwidth(s, k))
                .collect::<Result<_>>()?;
            let kdes = fit_all(ms, &bandwidths, floor)?;
            let lr = LogRatioSet::from_kdes(kdes, &pooled)?;
            let eig = fpca_basis::eigensystem(&fpca_basis::m_hat(&lr))?;
            let lead = eig.values[0];
            if !(lead > 0.0) || eig.values[..d_ref].iter().any(|&l| !(l > fpca_basis::ZERO_EIGEN_RATIO * lead)) {
                return Err(DrmError::rank(OP, format!("k = {k}: fewer than {d_ref} nonzero eigenvalues")));
            }
            let psi: Vec<Vec<f64>> = (0..d_ref).map(|j| lr.psi_at_pooled(&eig, j)).collect();
            let obj = matching_objective(&eig.values[..d_ref], &psi, &reference);
            if !obj.is_finite() {
                return Err(DrmError::numeric(OP, format!("k = {k}: non-finite objective")));
            }
            Ok((obj, bandwidths, lr))
        })
        .collect();

    let mut objective = Vec::with_capacity(candidates.len());
    let mut failures = Vec::new();
    for (&k, c) in k_grid.values().iter().zip(&candidates) {
        match c {
            Ok((obj, _, _)) => objective.push(Some(*obj)),
            Err(e) => {
                objective.push(None);
                failures.push((k, e.to_string()));
            }
        }
    }
    let Some(best) = argmin_first(&objective) else {
        let detail: Vec<String> = failures.iter().map(|(k, e)| format!("k={k}: {e}")).collect();
        return Err(DrmError::Selection {
            op: OP,
            msg: format!("every candidate failed: {}", detail.join("; ")),
        });
    };
    let search = BandwidthSearch {
        k_grid: k_grid.values().to_vec(),
        family,
        objective,
        failures,
    };
    let k = k_grid.values()[best];
    let (_, bandwidths, log_ratios) = candidates.into_iter().nth(best).expect("index in range").expect("winner succeeded");
    Ok(BandwidthChoice {
        k,
        bandwidths,
        search,
        log_ratios,
    })
}
