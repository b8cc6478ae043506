//! End-to-end adaptive pipeline: bandwidths, log ratios, eigensystem,
//! choice of `d`, and the final DRM fit.

use std::str::FromStr;

use crate::basis::Basis;
use crate::el_drm::{fit_drm_values, DrmFit};
use crate::error::{DrmError, Result};
use crate::fpca_basis::{self, AdaptiveBasis, DSelection, EigenSystem, LogRatioSet, Provenance};
use crate::kde::{self, BandwidthSearch, FloorPolicy, KGrid, ReferenceFamily};
use crate::multisample::{MultiSample, PooledEmpirical};

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthPolicy {
    Silverman,
    Adaptive { family: ReferenceFamily, grid: KGrid },
    Fixed(f64),
}

impl FromStr for BandwidthPolicy {
    type Err = DrmError;

    /// `silverman`, `adaptive`, or `fixed:<h>`. The adaptive form uses the
    /// normal reference and default grid; callers override those fields.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silverman" => Ok(Self::Silverman),
            "adaptive" => Ok(Self::Adaptive {
                family: ReferenceFamily::Normal,
                grid: KGrid::default(),
            }),
            _ => {
                let h = s
                    .strip_prefix("fixed:")
                    .and_then(|h| h.parse::<f64>().ok())
                    .filter(|h| *h > 0.0 && h.is_finite())
                    .ok_or_else(|| {
                        DrmError::usage("cli::main", format!("bad bandwidth {s:?}; use silverman, adaptive or fixed:<h>"))
                    })?;
                Ok(Self::Fixed(h))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DPolicy {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub bandwidth: BandwidthPolicy,
    pub floor: FloorPolicy,
    pub d: DPolicy,
    pub threshold: f64,
    pub bic_candidates: Vec<usize>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthPolicy::Adaptive {
                family: ReferenceFamily::Normal,
                grid: KGrid::default(),
            },
            floor: FloorPolicy::Off,
            d: DPolicy::Auto,
            threshold: 0.95,
            bic_candidates: vec![1, 2, 3, 4],
        }
    }
}

/// Log ratios and eigensystem for one dataset.
#[derive(Debug, Clone)]
pub struct EigenRun {
    pub log_ratios: LogRatioSet,
    pub eig: EigenSystem,
    pub bandwidths: Vec<f64>,
    pub k: Option<f64>,
    pub search: Option<BandwidthSearch>,
}

pub fn estimate_eigensystem(ms: &MultiSample, cfg: &AdaptiveConfig) -> Result<EigenRun> {
    let pooled = ms.pool();
    let (log_ratios, bandwidths, k, search) = match &cfg.bandwidth {
        BandwidthPolicy::Adaptive { family, grid } => {
            let choice = kde::select_bandwidth(ms, *family, grid, cfg.floor)?;
            (choice.log_ratios, choice.bandwidths, Some(choice.k), Some(choice.search))
        }
        BandwidthPolicy::Silverman => {
            let bw: Vec<f64> = ms.samples().iter().map(|s| kde::silverman_bandwidth(s)).collect::<Result<_>>()?;
            let kdes = kde::fit_all(ms, &bw, cfg.floor)?;
            (LogRatioSet::from_kdes(kdes, &pooled)?, bw, None, None)
        }
        BandwidthPolicy::Fixed(h) => {
            let bw = vec![*h; ms.num_populations()];
            let kdes = kde::fit_all(ms, &bw, cfg.floor)?;
            (LogRatioSet::from_kdes(kdes, &pooled)?, bw, None, None)
        }
    };
    let eig = fpca_basis::eigensystem(&fpca_basis::m_hat(&log_ratios))?;
    Ok(EigenRun {
        log_ratios,
        eig,
        bandwidths,
        k,
        search,
    })
}

/// Adaptive basis with its fit.
#[derive(Debug, Clone)]
pub struct AdaptiveFit {
    pub basis: AdaptiveBasis,
    pub fit: DrmFit,
    pub selection: Option<DSelection>,
}

/// Builds the basis with `d` chosen by `policy` and fits the DRM, reusing
/// candidate fits from the BIC step where possible.
pub fn fit_from_run(run: &EigenRun, pooled: &PooledEmpirical, cfg: &AdaptiveConfig) -> Result<AdaptiveFit> {
    let (mut basis, fit, selection) = match cfg.d {
        DPolicy::Fixed(d) => {
            let basis = fpca_basis::build_basis(&run.log_ratios, &run.eig, d)?;
            let fit = fit_drm_values(pooled, basis.values_at(pooled)?)?;
            (basis, fit, None)
        }
        DPolicy::Auto => {
            let outcome =
                fpca_basis::select_d(&run.log_ratios, &run.eig, pooled, cfg.threshold, &cfg.bic_candidates)?;
            let d = outcome.selection.d;
            let fit = match outcome.fits.into_iter().find(|(j, _)| *j == d) {
                Some((_, fit)) => fit,
                None => fit_drm_values(pooled, outcome.basis.values_at(pooled)?)?,
            };
            (outcome.basis, fit, Some(outcome.selection))
        }
    };
    basis.set_provenance(Provenance {
        bandwidths: run.bandwidths.clone(),
        bandwidth_k: run.k,
        selection: selection.clone(),
    });
    Ok(AdaptiveFit { basis, fit, selection })
}

pub fn fit_adaptive(ms: &MultiSample, cfg: &AdaptiveConfig) -> Result<AdaptiveFit> {
    if ms.m() < 1 {
        return Err(DrmError::usage(
            "fpca_basis::build_basis",
            "the adaptive basis needs at least two populations",
        ));
    }
    let run = estimate_eigensystem(ms, cfg)?;
    fit_from_run(&run, &ms.pool(), cfg)
}
