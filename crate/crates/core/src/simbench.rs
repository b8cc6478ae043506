//! Simulation scenarios, their true densities and quantiles, and the
//! Monte Carlo driver that scores each estimator.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};

use crate::baselines::{ku_fit, ku_quantile, DEFAULT_GRID};
use crate::basis::{Basis, FixedBasis};
use crate::el_drm::{fit_drm_values, DrmFit};
use crate::error::{DrmError, Result};
use crate::estimators::{drm_quantile, empirical_quantile, np_density, DrmDensity};
use crate::fpca_basis;
use crate::kde::{KGrid, ReferenceFamily};
use crate::kernel::phi;
use crate::multisample::MultiSample;
use crate::pipeline::{self, AdaptiveConfig, BandwidthPolicy};
use crate::quadrature::{adaptive_simpson, trapezoid};
use crate::rng::Stream;

pub const LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const IMSE_POINTS: usize = 2048;
const TAIL: f64 = 1e-4;
const MAX_FAILURE_RATE: f64 = 0.05;
const XI: (f64, f64) = (-0.6745, 0.6745);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScenarioId {
    NormalEqVar,
    NormalUneqVar,
    Gamma,
    SelfDesigned,
    Weibull,
    NormalMixture,
}

impl ScenarioId {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::NormalEqVar => "s1",
            ScenarioId::NormalUneqVar => "s2",
            ScenarioId::Gamma => "s3",
            ScenarioId::SelfDesigned => "s4",
            ScenarioId::Weibull => "weibull",
            ScenarioId::NormalMixture => "mixture",
        }
    }

    /// Family used for the bandwidth search's reference eigensystem.
    pub fn reference_family(self) -> ReferenceFamily {
        match self {
            ScenarioId::Gamma | ScenarioId::Weibull => ReferenceFamily::Gamma,
            _ => ReferenceFamily::Normal,
        }
    }

    /// The basis under which the scenario satisfies the model, if any.
    pub fn truth_basis(self) -> Option<FixedBasis> {
        let spec = match self {
            ScenarioId::NormalEqVar => "x",
            ScenarioId::NormalUneqVar => "x,x2",
            ScenarioId::Gamma => "x,logx",
            ScenarioId::SelfDesigned => "normpdf:-0.6745,normpdf:0.6745",
            ScenarioId::Weibull | ScenarioId::NormalMixture => return None,
        };
        Some(FixedBasis::parse(spec).expect("valid basis"))
    }
}

impl FromStr for ScenarioId {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "s1" | "normal_eqvar" => Self::NormalEqVar,
            "s2" | "normal_uneqvar" => Self::NormalUneqVar,
            "s3" | "gamma" => Self::Gamma,
            "s4" | "self_designed" => Self::SelfDesigned,
            "weibull" => Self::Weibull,
            "mixture" | "normal_mixture" => Self::NormalMixture,
            _ => return Err(DrmError::usage("simbench::generate", format!("unknown scenario {s:?}"))),
        })
    }
}

/// One population's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    Mixture { weight: f64, mean1: f64, sd1: f64, mean2: f64, sd2: f64 },
    /// `φ(x) exp{α + b1 φ(x - ξ1) + b2 φ(x - ξ2)}`.
    Tilted { alpha: f64, b1: f64, b2: f64 },
}

fn normal(mean: f64, sd: f64) -> Normal {
    Normal::new(mean, sd).expect("valid normal parameters")
}

impl Family {
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => normal(mean, sd).pdf(x),
            Family::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    Gamma::new(shape, 1.0 / scale).expect("valid gamma").pdf(x)
                }
            }
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = x / scale;
                    shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
                }
            }
            Family::Mixture { weight, mean1, sd1, mean2, sd2 } => {
                weight * normal(mean1, sd1).pdf(x) + (1.0 - weight) * normal(mean2, sd2).pdf(x)
            }
            Family::Tilted { alpha, b1, b2 } => phi(x) * (alpha + b1 * phi(x - XI.0) + b2 * phi(x - XI.1)).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Family::Normal { mean, sd } => normal(mean, sd).cdf(x),
            Family::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    Gamma::new(shape, 1.0 / scale).expect("valid gamma").cdf(x)
                }
            }
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Family::Mixture { weight, mean1, sd1, mean2, sd2 } => {
                weight * normal(mean1, sd1).cdf(x) + (1.0 - weight) * normal(mean2, sd2).cdf(x)
            }
            Family::Tilted { .. } => {
                if x <= -10.0 {
                    0.0
                } else {
                    adaptive_simpson(|t| self.density(t), -10.0, x.min(10.0), 1e-12)?.clamp(0.0, 1.0)
                }
            }
        })
    }

    /// Bracket wide enough to contain every quantile bisection target.
    fn bracket(&self) -> (f64, f64) {
        match *self {
            Family::Normal { mean, sd } => (mean - 12.0 * sd, mean + 12.0 * sd),
            Family::Gamma { shape, scale } => (0.0, scale * (shape + 40.0 * shape.sqrt() + 40.0)),
            Family::Weibull { scale, .. } => (0.0, scale * 10.0),
            Family::Mixture { mean1, sd1, mean2, sd2, .. } => {
                (mean1.min(mean2) - 12.0 * sd1.max(sd2), mean1.max(mean2) + 12.0 * sd1.max(sd2))
            }
            Family::Tilted { .. } => (-10.0, 10.0),
        }
    }

    pub fn quantile(&self, tau: f64) -> Result<f64> {
        match *self {
            Family::Normal { mean, sd } => Ok(normal(mean, sd).inverse_cdf(tau)),
            Family::Weibull { shape, scale } => Ok(scale * (-(-tau).ln_1p()).powf(1.0 / shape)),
            _ => {
                let (mut lo, mut hi) = self.bracket();
                while hi - lo > 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid)? < tau {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    fn sample(&self, s: &mut Stream) -> f64 {
        match *self {
            Family::Normal { mean, sd } => mean + sd * s.normal(),
            Family::Gamma { shape, scale } => s.gamma(shape, scale),
            Family::Weibull { shape, scale } => s.weibull(shape, scale),
            Family::Mixture { weight, mean1, sd1, mean2, sd2 } => {
                if s.uniform() < weight {
                    mean1 + sd1 * s.normal()
                } else {
                    mean2 + sd2 * s.normal()
                }
            }
            Family::Tilted { alpha, b1, b2 } => {
                let bound = tilted_envelope(alpha, b1, b2);
                loop {
                    let z = s.normal();
                    let u = s.uniform();
                    if u * bound <= (alpha + b1 * phi(z - XI.0) + b2 * phi(z - XI.1)).exp() {
                        return z;
                    }
                }
            }
        }
    }
}

/// `exp{α + max(b1, 0) φ_max + max(b2, 0) φ_max}`, which bounds `g/φ`.
fn tilted_envelope(alpha: f64, b1: f64, b2: f64) -> f64 {
    let phi_max = phi(0.0);
    (alpha + b1.max(0.0) * phi_max + b2.max(0.0) * phi_max).exp()
}

/// `α = -log ∫ φ(x) exp{b1 φ(x - ξ1) + b2 φ(x - ξ2)} dx`.
pub fn tilted_alpha(b1: f64, b2: f64) -> Result<f64> {
    let mass = adaptive_simpson(|x| phi(x) * (b1 * phi(x - XI.0) + b2 * phi(x - XI.1)).exp(), -10.0, 10.0, 1e-12)?;
    Ok(-mass.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub populations: Vec<Family>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize, reps: usize, seed: u64) -> Result<Self> {
        const OP: &str = "simbench::generate";
        if n < 2 {
            return Err(DrmError::usage(OP, "each sample needs at least 2 observations"));
        }
        let populations = match id {
            ScenarioId::NormalEqVar => [18.0, 18.5, 18.5, 17.5, 19.0, 18.0]
                .iter()
                .map(|&mean| Family::Normal { mean, sd: 6f64.sqrt() })
                .collect(),
            ScenarioId::NormalUneqVar => [18.0, 18.5, 18.5, 17.5, 18.0, 18.0]
                .iter()
                .zip([6.0, 6.5, 7.0, 6.0, 6.5, 6.0])
                .map(|(&mean, v): (&f64, f64)| Family::Normal { mean, sd: v.sqrt() })
                .collect(),
            ScenarioId::Gamma => [6.0, 6.0, 7.0, 7.0, 8.0, 8.0]
                .iter()
                .zip([1.5, 1.4, 1.3, 1.2, 1.1, 1.0])
                .map(|(&shape, scale)| Family::Gamma { shape, scale })
                .collect(),
            ScenarioId::SelfDesigned => {
                let b1 = [0.0, 2.0, 1.0, 0.0, -2.0, 3.0];
                let b2 = [0.0, -3.0, 1.0, -2.0, 2.0, -1.0];
                b1.iter()
                    .zip(b2)
                    .map(|(&b1, b2)| Ok(Family::Tilted { alpha: tilted_alpha(b1, b2)?, b1, b2 }))
                    .collect::<Result<Vec<_>>>()?
            }
            ScenarioId::Weibull => [4.5, 5.0, 6.0, 6.5, 7.0, 7.5]
                .iter()
                .zip([10.0, 9.0, 11.0, 11.5, 12.5, 12.0])
                .map(|(&shape, scale)| Family::Weibull { shape, scale })
                .collect(),
            ScenarioId::NormalMixture => {
                let w = [0.5, 0.5, 0.3, 0.5, 0.4, 0.2];
                let m1 = [15.0, 15.0, 15.5, 16.0, 14.5, 15.0];
                let m2 = [18.0, 18.0, 17.0, 19.0, 17.0, 16.0];
                let v1 = [3.0, 3.0, 3.5, 3.0, 3.5, 3.0];
                let v2 = [3.0, 3.5, 4.0, 4.0, 4.5, 3.0];
                (0..6)
                    .map(|r| Family::Mixture {
                        weight: w[r],
                        mean1: m1[r],
                        sd1: f64::sqrt(v1[r]),
                        mean2: m2[r],
                        sd2: f64::sqrt(v2[r]),
                    })
                    .collect()
            }
        };
        let spec = Self {
            id,
            populations,
            n,
            reps,
            seed,
        };
        spec.check_envelopes()?;
        Ok(spec)
    }

    fn check_envelopes(&self) -> Result<()> {
        for (population, f) in self.populations.iter().enumerate() {
            if let Family::Tilted { alpha, b1, b2 } = *f {
                let rate = 1.0 / tilted_envelope(alpha, b1, b2);
                if rate < 0.01 {
                    return Err(DrmError::Envelope { population, rate });
                }
            }
        }
        Ok(())
    }
}

/// Samples for repetition `rep`; a pure function of `(spec.seed, rep)`.
pub fn generate(spec: &ScenarioSpec, rep: usize) -> Result<MultiSample> {
    let mut stream = Stream::for_rep(spec.seed, rep as u64);
    let samples = spec
        .populations
        .iter()
        .map(|f| (0..spec.n).map(|_| f.sample(&mut stream)).collect())
        .collect();
    MultiSample::new(samples)
}

/// True densities on each population's IMSE grid and true quantiles.
#[derive(Debug, Clone)]
pub struct Truth {
    pub grids: Vec<Vec<f64>>,
    pub steps: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub quantiles: Vec<Vec<f64>>,
}

pub fn truth(spec: &ScenarioSpec) -> Result<Truth> {
    let mut t = Truth {
        grids: Vec::new(),
        steps: Vec::new(),
        densities: Vec::new(),
        quantiles: Vec::new(),
    };
    for f in &spec.populations {
        let lo = f.quantile(TAIL)?;
        let hi = f.quantile(1.0 - TAIL)?;
        let step = (hi - lo) / (IMSE_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..IMSE_POINTS).map(|i| lo + i as f64 * step).collect();
        t.densities.push(grid.iter().map(|&x| f.density(x)).collect());
        t.grids.push(grid);
        t.steps.push(step);
        t.quantiles.push(LEVELS.iter().map(|&p| f.quantile(p)).collect::<Result<_>>()?);
    }
    Ok(t)
}

/// `∫ (ĝ - g)²` by the trapezoid rule on a uniform grid.
pub fn imse_accumulate(estimate: &[f64], truth: &[f64], step: f64) -> f64 {
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).collect();
    trapezoid(&sq, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimator {
    Truth,
    Adaptive,
    Rich,
    Np,
    Ku(usize),
    Fpc(usize),
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Truth => "Truth".into(),
            Estimator::Adaptive => "Adaptive".into(),
            Estimator::Rich => "Rich".into(),
            Estimator::Np => "NP".into(),
            Estimator::Ku(l) => format!("K&U {l}"),
            Estimator::Fpc(d) => format!("{d} FPCs"),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }
}

impl FromStr for Estimator {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DrmError::usage("simbench::run_benchmark", format!("unknown estimator {s:?}"));
        Ok(match s {
            "truth" => Self::Truth,
            "adaptive" => Self::Adaptive,
            "rich" => Self::Rich,
            "np" => Self::Np,
            _ => {
                if let Some(l) = s.strip_prefix("ku") {
                    Self::Ku(l.parse().map_err(|_| bad())?)
                } else if let Some(d) = s.strip_prefix("fpc") {
                    let d: usize = d.parse().map_err(|_| bad())?;
                    if d == 0 {
                        return Err(bad());
                    }
                    Self::Fpc(d)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Errors of one estimator on one repetition, per population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRecord {
    pub rep: usize,
    pub estimator: String,
    pub population: usize,
    pub ise: f64,
    /// Squared quantile errors at [`LEVELS`].
    pub quantile_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub estimator: String,
    /// `n_r × IMSE` per population.
    pub imse: Vec<f64>,
    pub imse_avg: f64,
    /// `n_r × MSE` averaged over populations, per level.
    pub quantile_mse: Vec<f64>,
    pub quantile_mse_avg: f64,
    pub failures: usize,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub raw: Vec<RawRecord>,
}

/// `%g`-style formatting with `sig` significant digits.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if exp < -4 || exp >= sig as i32 {
        let t = format!("{:.*e}", sig - 1, v);
        let (mant, e) = t.split_once('e').expect("exponent");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        let e: i32 = e.parse().expect("exponent digits");
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let t = format!("{v:.decimals$}");
        if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t
        }
    };
    s
}

impl BenchReport {
    /// Rows are estimators; columns are populations and their average, then
    /// quantile levels and their average.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let pops = self.rows.first().map_or(0, |r| r.imse.len());
        out.push_str("estimator");
        for r in 0..pops {
            let _ = write!(out, "\timse_pop{r}");
        }
        out.push_str("\timse_avg");
        for l in &self.levels {
            let _ = write!(out, "\tmse_q{l}");
        }
        out.push_str("\tmse_avg\n");
        for row in &self.rows {
            out.push_str(&row.estimator);
            for v in row.imse.iter().chain([&row.imse_avg]).chain(&row.quantile_mse).chain([&row.quantile_mse_avg]) {
                out.push('\t');
                out.push_str(&format_sig(*v, 6));
            }
            out.push('\n');
        }
        out
    }

    /// Per-repetition raw (unscaled) errors.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("rep,estimator,population,ise");
        for l in &self.levels {
            let _ = write!(out, ",sqerr_q{l}");
        }
        out.push('\n');
        for r in &self.raw {
            let _ = write!(out, "{},{},{},{:e}", r.rep, r.estimator, r.population, r.ise);
            for q in &r.quantile_sq {
                let _ = write!(out, ",{q:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == label)
    }
}

struct Scored {
    ise: Vec<f64>,
    quantile_sq: Vec<Vec<f64>>,
}

fn score_drm(fit: &DrmFit, truth: &Truth) -> Result<Scored> {
    let mut ise = Vec::new();
    let mut quantile_sq = Vec::new();
    for r in 0..fit.num_populations() {
        let dens = DrmDensity::new(fit, r)?;
        let est: Vec<f64> = truth.grids[r].iter().map(|&x| dens.eval(x)).collect();
        ise.push(imse_accumulate(&est, &truth.densities[r], truth.steps[r]));
        quantile_sq.push(
            LEVELS
                .iter()
                .zip(&truth.quantiles[r])
                .map(|(&p, &q)| drm_quantile(fit, r, p).map(|e| (e - q) * (e - q)))
                .collect::<Result<_>>()?,
        );
    }
    Ok(Scored { ise, quantile_sq })
}

fn score_np(ms: &MultiSample, truth: &Truth) -> Result<Scored> {
    let mut ise = Vec::new();
    let mut quantile_sq = Vec::new();
    for (r, s) in ms.samples().iter().enumerate() {
        let kde = np_density(s)?;
        let est: Vec<f64> = truth.grids[r].iter().map(|&x| kde.eval(x)).collect();
        ise.push(imse_accumulate(&est, &truth.densities[r], truth.steps[r]));
        quantile_sq.push(
            LEVELS
                .iter()
                .zip(&truth.quantiles[r])
                .map(|(&p, &q)| empirical_quantile(s, p).map(|e| (e - q) * (e - q)))
                .collect::<Result<_>>()?,
        );
    }
    Ok(Scored { ise, quantile_sq })
}

fn score_ku(ms: &MultiSample, l: usize, truth: &Truth) -> Result<Scored> {
    let model = ku_fit(ms, l, DEFAULT_GRID)?;
    let mut ise = Vec::new();
    let mut quantile_sq = Vec::new();
    for r in 0..ms.num_populations() {
        let est: Vec<f64> = truth.grids[r].iter().map(|&x| model.eval(r, x)).collect();
        ise.push(imse_accumulate(&est, &truth.densities[r], truth.steps[r]));
        quantile_sq.push(
            LEVELS
                .iter()
                .zip(&truth.quantiles[r])
                .map(|(&p, &q)| ku_quantile(&model, r, p).map(|e| (e - q) * (e - q)))
                .collect::<Result<_>>()?,
        );
    }
    Ok(Scored { ise, quantile_sq })
}

/// Adaptive-pipeline configuration used by the benchmark for a scenario.
pub fn bench_config(id: ScenarioId) -> AdaptiveConfig {
    AdaptiveConfig {
        bandwidth: BandwidthPolicy::Adaptive {
            family: id.reference_family(),
            grid: KGrid::default(),
        },
        ..AdaptiveConfig::default()
    }
}

fn run_rep(spec: &ScenarioSpec, estimators: &[Estimator], truth: &Truth, rep: usize) -> Vec<Result<Scored>> {
    let ms = match generate(spec, rep) {
        Ok(ms) => ms,
        Err(e) => return estimators.iter().map(|_| Err(DrmError::Benchmark { msg: e.to_string() })).collect(),
    };
    let pooled = ms.pool();
    let needs_eigen = estimators.iter().any(|e| matches!(e, Estimator::Adaptive | Estimator::Fpc(_)));
    let cfg = bench_config(spec.id);
    let run = if needs_eigen { Some(pipeline::estimate_eigensystem(&ms, &cfg)) } else { None };

    estimators
        .iter()
        .map(|est| -> Result<Scored> {
            match *est {
                Estimator::Np => score_np(&ms, truth),
                Estimator::Ku(l) => score_ku(&ms, l, truth),
                Estimator::Truth | Estimator::Rich => {
                    let basis = if *est == Estimator::Truth {
                        spec.id.truth_basis().ok_or_else(|| {
                            DrmError::usage("simbench::run_benchmark", "this scenario has no true basis")
                        })?
                    } else {
                        FixedBasis::rich()
                    };
                    let fit = fit_drm_values(&pooled, basis.values_at(&pooled)?)?;
                    score_drm(&fit, truth)
                }
                Estimator::Adaptive => {
                    let run = run.as_ref().expect("eigensystem computed").as_ref().map_err(clone_err)?;
                    let fitted = pipeline::fit_from_run(run, &pooled, &cfg)?;
                    score_drm(&fitted.fit, truth)
                }
                Estimator::Fpc(d) => {
                    let run = run.as_ref().expect("eigensystem computed").as_ref().map_err(clone_err)?;
                    let basis = fpca_basis::build_basis(&run.log_ratios, &run.eig, d)?;
                    let fit = fit_drm_values(&pooled, basis.values_at(&pooled)?)?;
                    score_drm(&fit, truth)
                }
            }
        })
        .collect()
}

fn clone_err(e: &DrmError) -> DrmError {
    DrmError::Benchmark { msg: e.to_string() }
}

/// Runs every repetition and aggregates. Repetitions run in parallel on a
/// pool of `threads` workers (all cores when `None`); results are gathered
/// and summed in repetition order, so the report does not depend on the
/// thread count.
pub fn run_benchmark(spec: &ScenarioSpec, estimators: &[Estimator], threads: Option<usize>) -> Result<BenchReport> {
    const OP: &str = "simbench::run_benchmark";
    if spec.reps == 0 {
        return Err(DrmError::EmptyReport);
    }
    if estimators.is_empty() {
        return Err(DrmError::usage(OP, "no estimators requested"));
    }
    if estimators.contains(&Estimator::Truth) && spec.id.truth_basis().is_none() {
        return Err(DrmError::usage(OP, format!("scenario {} has no true basis", spec.id.name())));
    }
    let truth = truth(spec)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| DrmError::Benchmark { msg: format!("cannot start worker pool: {e}") })?;
    let per_rep: Vec<Vec<Result<Scored>>> =
        pool.install(|| (0..spec.reps).into_par_iter().map(|rep| run_rep(spec, estimators, &truth, rep)).collect());

    let m1 = spec.populations.len();
    let scale = spec.n as f64;
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut warnings = Vec::new();
    for (e, est) in estimators.iter().enumerate() {
        let label = est.label();
        let mut ise_sum = vec![0.0; m1];
        let mut q_sum = vec![vec![0.0; LEVELS.len()]; m1];
        let mut completed = 0usize;
        let mut failures = 0usize;
        let mut first_error = None;
        for (rep, results) in per_rep.iter().enumerate() {
            match &results[e] {
                Ok(s) => {
                    completed += 1;
                    for r in 0..m1 {
                        ise_sum[r] += s.ise[r];
                        for (acc, v) in q_sum[r].iter_mut().zip(&s.quantile_sq[r]) {
                            *acc += v;
                        }
                        raw.push(RawRecord {
                            rep,
                            estimator: label.clone(),
                            population: r,
                            ise: s.ise[r],
                            quantile_sq: s.quantile_sq[r].clone(),
                        });
                    }
                }
                Err(err) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| format!("rep {rep}: {err}"));
                }
            }
        }
        if failures > 0 {
            warnings.push(format!(
                "{label}: {failures} of {} repetitions failed (first: {})",
                spec.reps,
                first_error.as_deref().unwrap_or("")
            ));
        }
        if failures as f64 > MAX_FAILURE_RATE * spec.reps as f64 || completed == 0 {
            return Err(DrmError::Benchmark {
                msg: format!(
                    "{label} failed on {failures} of {} repetitions: {}",
                    spec.reps,
                    first_error.unwrap_or_default()
                ),
            });
        }
        let c = completed as f64;
        let imse: Vec<f64> = ise_sum.iter().map(|s| scale * (s / c)).collect();
        let quantile_mse: Vec<f64> = (0..LEVELS.len())
            .map(|l| (0..m1).map(|r| scale * (q_sum[r][l] / c)).sum::<f64>() / m1 as f64)
            .collect();
        rows.push(ReportRow {
            estimator: label,
            imse_avg: imse.iter().sum::<f64>() / m1 as f64,
            imse,
            quantile_mse_avg: quantile_mse.iter().sum::<f64>() / LEVELS.len() as f64,
            quantile_mse,
            failures,
            completed,
        });
    }
    Ok(BenchReport {
        scenario: spec.id.name().into(),
        n: spec.n,
        reps: spec.reps,
        seed: spec.seed,
        levels: LEVELS.to_vec(),
        rows,
        warnings,
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_parameters() {
        let s1 = ScenarioSpec::new(ScenarioId::NormalEqVar, 10, 1, 0).unwrap();
        assert_eq!(s1.populations.len(), 6);
        assert!((s1.populations[0].quantile(0.5).unwrap() - 18.0).abs() < 1e-12);
        let s3 = ScenarioSpec::new(ScenarioId::Gamma, 10, 1, 0).unwrap();
        match s3.populations[0] {
            Family::Gamma { shape, scale } => {
                assert_eq!((shape, scale), (6.0, 1.5));
                assert!((shape * scale - 9.0).abs() < 1e-12);
                assert!((shape * scale * scale - 13.5).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn untilted_alpha_is_zero() {
        assert!(tilted_alpha(0.0, 0.0).unwrap().abs() < 1e-11);
        let f = Family::Tilted { alpha: 0.0, b1: 0.0, b2: 0.0 };
        assert!((f.density(0.3) - phi(0.3)).abs() < 1e-16);
        let spec = ScenarioSpec::new(ScenarioId::SelfDesigned, 10, 1, 0).unwrap();
        for f in &spec.populations {
            assert!((f.cdf(10.0).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn quantiles_invert_cdfs() {
        for id in [ScenarioId::Gamma, ScenarioId::Weibull, ScenarioId::NormalMixture, ScenarioId::SelfDesigned] {
            let spec = ScenarioSpec::new(id, 10, 1, 0).unwrap();
            for f in &spec.populations {
                for &p in &[1e-4, 0.1, 0.5, 0.9, 0.9999] {
                    let q = f.quantile(p).unwrap();
                    assert!((f.cdf(q).unwrap() - p).abs() < 1e-8, "{id:?} {p}");
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::new(ScenarioId::SelfDesigned, 50, 1, 42).unwrap();
        let a = generate(&spec, 3).unwrap();
        let b = generate(&spec, 3).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_ne!(generate(&spec, 4).unwrap().samples(), a.samples());
    }

    #[test]
    fn imse_cases() {
        let g = vec![0.3; 101];
        assert_eq!(imse_accumulate(&g, &g, 0.01), 0.0);
        let shifted: Vec<f64> = g.iter().map(|v| v + 0.5).collect();
        assert!((imse_accumulate(&shifted, &g, 0.01) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_reps_is_empty() {
        let spec = ScenarioSpec::new(ScenarioId::NormalEqVar, 10, 0, 0).unwrap();
        assert!(matches!(run_benchmark(&spec, &[Estimator::Np], Some(1)), Err(DrmError::EmptyReport)));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.140000123, 6), "0.14");
        assert_eq!(format_sig(12.7912345, 6), "12.7912");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(0.0000123456789, 6), "1.23457e-05");
        assert_eq!(format_sig(-2.5, 6), "-2.5");
    }

    #[test]
    fn estimator_names() {
        assert_eq!(
            Estimator::parse_list("truth,adaptive,rich,np,ku2,fpc3").unwrap(),
            vec![
                Estimator::Truth,
                Estimator::Adaptive,
                Estimator::Rich,
                Estimator::Np,
                Estimator::Ku(2),
                Estimator::Fpc(3)
            ]
        );
        assert!("fpc0".parse::<Estimator>().is_err());
    }
}
