//! Centered log density ratios, the `M̂` matrix, its eigensystem, and the
//! adaptive basis built from the leading eigenfunctions.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisMatrix};
use crate::el_drm::{self, DrmFit};
use crate::error::{DrmError, Result};
use crate::kde::KdeEstimate;
use crate::multisample::PooledEmpirical;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const ZERO_EIGEN_RATIO: f64 = 1e-12;

pub const BASIS_SCHEMA_VERSION: u32 = 1;

type LogDensityFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

/// Where the log densities behind a [`LogRatioSet`] come from.
#[derive(Clone)]
enum Source {
    Kde(Arc<Vec<KdeEstimate>>),
    Function(Arc<LogDensityFn>),
}

impl Source {
    fn ln_density(&self, k: usize, x: f64) -> f64 {
        match self {
            Source::Kde(kdes) => kdes[k].ln_eval(x),
            Source::Function(f) => f(k, x),
        }
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Kde(k) => write!(f, "Kde({} populations)", k.len()),
            Source::Function(_) => write!(f, "Function"),
        }
    }
}

/// From log densities `ln[k]` at one point, writes `Q̂_k` and `Q̂_k^c`.
/// Pooled and off-grid evaluation share this so their values agree bitwise.
fn center_column(ln: &[f64], offsets: &[f64], plain: &mut [f64], centered: &mut [f64]) {
    let m1 = ln.len();
    let mut total = 0.0;
    for k in 0..m1 {
        plain[k] = (ln[k] - ln[0]) - offsets[k];
        total += plain[k];
    }
    let mean = total / m1 as f64;
    for k in 0..m1 {
        centered[k] = plain[k] - mean;
    }
}

/// `ψ_j = λ_j^{-1/2} Σ_k p_kj Q̂_k^c`.
fn psi_value(p: &[f64], lambda: f64, centered: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in p.iter().zip(centered) {
        s += a * b;
    }
    s / lambda.sqrt()
}

/// Estimated log ratios `Q̂_k` and their across-population centering
/// `Q̂_k^c`, cached at the pooled points.
#[derive(Debug, Clone)]
pub struct LogRatioSet {
    source: Source,
    offsets: Vec<f64>,
    points: Vec<f64>,
    plain: Vec<Vec<f64>>,
    centered: Vec<Vec<f64>>,
}

impl LogRatioSet {
    pub fn from_kdes(kdes: Vec<KdeEstimate>, pooled: &PooledEmpirical) -> Result<Self> {
        Self::build(Source::Kde(Arc::new(kdes)), pooled)
    }

    /// Uses exact log densities `f(k, x)` in place of kernel estimates.
    pub fn from_log_density_fn<F>(pooled: &PooledEmpirical, populations: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, f64) -> f64 + Send + Sync + 'static,
    {
        if populations < 1 {
            return Err(DrmError::usage("fpca_basis::log_ratios", "no populations"));
        }
        let f: Arc<LogDensityFn> = Arc::new(f);
        Self::build_with(Source::Function(f), populations, pooled)
    }

    fn build(source: Source, pooled: &PooledEmpirical) -> Result<Self> {
        let populations = match &source {
            Source::Kde(k) => k.len(),
            Source::Function(_) => unreachable!(),
        };
        if populations < 1 {
            return Err(DrmError::usage("fpca_basis::log_ratios", "no populations"));
        }
        Self::build_with(source, populations, pooled)
    }

    fn build_with(source: Source, m1: usize, pooled: &PooledEmpirical) -> Result<Self> {
        let points = pooled.points().to_vec();
        let n = points.len();
        let mut ln = vec![vec![0.0; n]; m1];
        for (k, row) in ln.iter_mut().enumerate() {
            for (i, &x) in points.iter().enumerate() {
                let v = source.ln_density(k, x);
                if !v.is_finite() {
                    return Err(DrmError::Evaluation { population: k, point: x });
                }
                row[i] = v;
            }
        }
        let offsets: Vec<f64> = (0..m1)
            .map(|k| pooled.mean_of(&(0..n).map(|i| ln[k][i] - ln[0][i]).collect::<Vec<_>>()))
            .collect();
        let mut plain = vec![vec![0.0; n]; m1];
        let mut centered = vec![vec![0.0; n]; m1];
        let mut col = vec![0.0; m1];
        let mut p = vec![0.0; m1];
        let mut c = vec![0.0; m1];
        for i in 0..n {
            for k in 0..m1 {
                col[k] = ln[k][i];
            }
            center_column(&col, &offsets, &mut p, &mut c);
            for k in 0..m1 {
                plain[k][i] = p[k];
                centered[k][i] = c[k];
            }
        }
        Ok(Self {
            source,
            offsets,
            points,
            plain,
            centered,
        })
    }

    pub fn num_populations(&self) -> usize {
        self.plain.len()
    }

    /// Centering constants `∫ log(ĝ_k/ĝ_0) dF̄_n`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `Q̂_k` at the pooled points.
    pub fn plain(&self, k: usize) -> &[f64] {
        &self.plain[k]
    }

    /// `Q̂_k^c` at the pooled points.
    pub fn centered(&self, k: usize) -> &[f64] {
        &self.centered[k]
    }

    pub fn kdes(&self) -> Option<&[KdeEstimate]> {
        match &self.source {
            Source::Kde(k) => Some(k),
            Source::Function(_) => None,
        }
    }

    /// `Q̂_k^c(x)` for all `k` at an arbitrary point.
    pub fn centered_at(&self, x: f64) -> Result<Vec<f64>> {
        centered_at(&self.source, &self.offsets, x)
    }

    /// `ψ̂_j` at the pooled points.
    pub fn psi_at_pooled(&self, eig: &EigenSystem, j: usize) -> Vec<f64> {
        let m1 = self.num_populations();
        let mut col = vec![0.0; m1];
        (0..self.points.len())
            .map(|i| {
                for k in 0..m1 {
                    col[k] = self.centered[k][i];
                }
                psi_value(&eig.vectors[j], eig.values[j], &col)
            })
            .collect()
    }
}

fn centered_at(source: &Source, offsets: &[f64], x: f64) -> Result<Vec<f64>> {
    let m1 = offsets.len();
    let mut ln = vec![0.0; m1];
    for (k, v) in ln.iter_mut().enumerate() {
        *v = source.ln_density(k, x);
        if !v.is_finite() {
            return Err(DrmError::Evaluation { population: k, point: x });
        }
    }
    let mut plain = vec![0.0; m1];
    let mut centered = vec![0.0; m1];
    center_column(&ln, offsets, &mut plain, &mut centered);
    Ok(centered)
}

/// `M̂(i, j) = ∫ Q̂_i^c Q̂_j^c dF̄_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MHat(DMatrix<f64>);

impl MHat {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(DrmError::usage("fpca_basis::eigensystem", "matrix is not square"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0.row(i).sum()).collect()
    }
}

pub fn m_hat(lr: &LogRatioSet) -> MHat {
    let m1 = lr.num_populations();
    let n = lr.points.len() as f64;
    let mut m = DMatrix::zeros(m1, m1);
    for i in 0..m1 {
        for j in i..m1 {
            let s: f64 = lr.centered[i].iter().zip(&lr.centered[j]).map(|(a, b)| a * b).sum();
            m[(i, j)] = s / n;
            m[(j, i)] = s / n;
        }
    }
    MHat(m)
}

/// Eigenpairs in descending eigenvalue order; `vectors[j]` is `p̂_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// Number of eigenvalues above the numerical-zero cutoff.
    pub fn rank(&self) -> usize {
        let lead = self.values.first().copied().unwrap_or(0.0);
        if !(lead > 0.0) {
            return 0;
        }
        self.values.iter().take_while(|&&l| l > ZERO_EIGEN_RATIO * lead).count()
    }
}

/// Flips `v` so its largest-magnitude entry is positive (first such entry
/// when several tie).
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if max == 0.0 {
        return;
    }
    let lead = v.iter().position(|x| x.abs() >= max * (1.0 - 1e-10)).expect("nonempty");
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn eigensystem(m: &MHat) -> Result<EigenSystem> {
    const OP: &str = "fpca_basis::eigensystem";
    if m.0.iter().any(|v| !v.is_finite()) {
        return Err(DrmError::numeric(OP, "matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| DrmError::numeric(OP, "symmetric eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..m.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = order
        .iter()
        .map(|&j| {
            let col = eig.eigenvectors.column(j);
            let norm = col.norm();
            let mut v: Vec<f64> = col.iter().map(|x| x / norm).collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(EigenSystem { values, vectors })
}

/// How an adaptive basis was obtained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bandwidths: Vec<f64>,
    /// Scale factor chosen by the bandwidth search, if one ran.
    pub bandwidth_k: Option<f64>,
    pub selection: Option<DSelection>,
}

/// The data-adaptive basis `q̂ = (ψ̂_0, …, ψ̂_{d-1})`.
#[derive(Debug, Clone)]
pub struct AdaptiveBasis {
    lambdas: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    source: Source,
    offsets: Vec<f64>,
    pooled_points: Vec<f64>,
    pooled_values: Option<BasisMatrix>,
    provenance: Provenance,
}

pub fn build_basis(lr: &LogRatioSet, eig: &EigenSystem, d: usize) -> Result<AdaptiveBasis> {
    const OP: &str = "fpca_basis::build_basis";
    let m = lr.num_populations() - 1;
    if d < 1 || d > m {
        return Err(DrmError::usage(OP, format!("d must lie in 1..={m}, got {d}")));
    }
    if eig.rank() < d {
        return Err(DrmError::rank(
            OP,
            format!(
                "eigenvalue {} of M̂ is numerically zero ({:e}); use d <= {}",
                d - 1,
                eig.values[d - 1],
                eig.rank()
            ),
        ));
    }
    let lambdas = eig.values[..d].to_vec();
    let eigvecs = eig.vectors[..d].to_vec();
    let n = lr.points.len();
    let mut values = BasisMatrix::zeros(n, d);
    let mut col = vec![0.0; m + 1];
    for i in 0..n {
        for k in 0..=m {
            col[k] = lr.centered[k][i];
        }
        let row = values.row_mut(i);
        for j in 0..d {
            row[j] = psi_value(&eigvecs[j], lambdas[j], &col);
        }
    }
    let bandwidths = lr.kdes().map(|k| k.iter().map(KdeEstimate::bandwidth).collect()).unwrap_or_default();
    Ok(AdaptiveBasis {
        lambdas,
        eigvecs,
        source: lr.source.clone(),
        offsets: lr.offsets.clone(),
        pooled_points: lr.points.clone(),
        pooled_values: Some(values),
        provenance: Provenance {
            bandwidths,
            ..Provenance::default()
        },
    })
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    schema_version: u32,
    kind: String,
    d: usize,
    lambdas: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    kdes: Vec<KdeEstimate>,
    provenance: Provenance,
}

impl AdaptiveBasis {
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn eigvecs(&self) -> &[Vec<f64>] {
        &self.eigvecs
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    pub fn kdes(&self) -> Option<&[KdeEstimate]> {
        match &self.source {
            Source::Kde(k) => Some(k),
            Source::Function(_) => None,
        }
    }

    /// Keeps the first `d` eigenfunctions.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d < 1 || d > self.lambdas.len() {
            return Err(DrmError::usage(
                "fpca_basis::build_basis",
                format!("cannot truncate a {}-dimensional basis to {d}", self.lambdas.len()),
            ));
        }
        let mut out = self.clone();
        out.lambdas.truncate(d);
        out.eigvecs.truncate(d);
        out.pooled_values = self.pooled_values.as_ref().map(|v| v.truncated(d));
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let Some(kdes) = self.kdes() else {
            return Err(DrmError::usage(
                "fpca_basis::build_basis",
                "only kernel-based bases can be serialized",
            ));
        };
        let file = BasisFile {
            schema_version: BASIS_SCHEMA_VERSION,
            kind: "adaptive".into(),
            d: self.lambdas.len(),
            lambdas: self.lambdas.clone(),
            eigvecs: self.eigvecs.clone(),
            offsets: self.offsets.clone(),
            kdes: kdes.to_vec(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| DrmError::numeric("fpca_basis::build_basis", format!("serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        const OP: &str = "fpca_basis::load_basis";
        let file: BasisFile =
            serde_json::from_str(text).map_err(|e| DrmError::usage(OP, format!("invalid basis file: {e}")))?;
        if file.schema_version != BASIS_SCHEMA_VERSION {
            return Err(DrmError::usage(
                OP,
                format!("unsupported basis schema version {}", file.schema_version),
            ));
        }
        let m1 = file.offsets.len();
        let consistent = file.kind == "adaptive"
            && file.d >= 1
            && file.lambdas.len() == file.d
            && file.eigvecs.len() == file.d
            && file.eigvecs.iter().all(|v| v.len() == m1)
            && file.kdes.len() == m1;
        if !consistent {
            return Err(DrmError::usage(OP, "basis file fields are inconsistent"));
        }
        Ok(Self {
            lambdas: file.lambdas,
            eigvecs: file.eigvecs,
            source: Source::Kde(Arc::new(file.kdes)),
            offsets: file.offsets,
            pooled_points: Vec::new(),
            pooled_values: None,
            provenance: file.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| DrmError::Io {
            op: "fpca_basis::save",
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DrmError::Io {
            op: "fpca_basis::load_basis",
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl Basis for AdaptiveBasis {
    fn dim(&self) -> usize {
        self.lambdas.len()
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        let c = centered_at(&self.source, &self.offsets, x)?;
        for (j, o) in out.iter_mut().enumerate() {
            *o = psi_value(&self.eigvecs[j], self.lambdas[j], &c);
        }
        Ok(())
    }

    fn values_at(&self, pooled: &PooledEmpirical) -> Result<BasisMatrix> {
        if let Some(v) = &self.pooled_values {
            if pooled.points() == self.pooled_points.as_slice() {
                return Ok(v.clone());
            }
        }
        let mut m = BasisMatrix::zeros(pooled.len(), self.dim());
        for (i, &x) in pooled.points().iter().enumerate() {
            self.eval_into(x, m.row_mut(i))?;
        }
        Ok(m)
    }

    fn describe(&self) -> String {
        format!("adaptive(d={})", self.lambdas.len())
    }
}

/// One BIC candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub j: usize,
    pub loglik: Option<f64>,
    pub bic: Option<f64>,
    pub note: Option<String>,
}

/// Record of how `d` was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSelection {
    pub d: usize,
    pub j1: usize,
    pub j2: usize,
    pub threshold: f64,
    /// Cumulative share of the eigenvalue total for `J = 1, …, m + 1`.
    pub variance_explained: Vec<f64>,
    pub bic: Vec<BicEntry>,
    pub warnings: Vec<String>,
}

/// `-2 ℓ̃ + m J log N`.
pub fn bic(loglik: f64, m: usize, j: usize, n_total: usize) -> f64 {
    -2.0 * loglik + (m * j) as f64 * (n_total as f64).ln()
}

/// Cumulative variance shares `Σ_{j<J} λ_j / Σ_j λ_j`.
pub fn variance_explained(values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(DrmError::rank("fpca_basis::select_d", "all eigenvalues of M̂ are zero"));
    }
    let mut acc = 0.0;
    Ok(values
        .iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect())
}

/// Smallest `J` whose cumulative share reaches `threshold`.
pub fn threshold_choice(shares: &[f64], threshold: f64) -> usize {
    shares
        .iter()
        .position(|&s| s >= threshold - 1e-12)
        .map_or(shares.len(), |i| i + 1)
}

/// Outcome of [`select_d`], with the candidate fits kept for reuse.
#[derive(Debug, Clone)]
pub struct DSelectionOutcome {
    pub selection: DSelection,
    pub basis: AdaptiveBasis,
    pub fits: Vec<(usize, DrmFit)>,
}

/// Chooses `d = max(J1, J2)` from the variance threshold and BIC.
pub fn select_d(
    lr: &LogRatioSet,
    eig: &EigenSystem,
    pooled: &PooledEmpirical,
    threshold: f64,
    bic_candidates: &[usize],
) -> Result<DSelectionOutcome> {
    const OP: &str = "fpca_basis::select_d";
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DrmError::usage(OP, format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let m = lr.num_populations() - 1;
    if m < 1 {
        return Err(DrmError::usage(OP, "d selection needs at least two populations"));
    }
    let shares = variance_explained(&eig.values)?;
    let rank = eig.rank();
    let j1 = threshold_choice(&shares, threshold).min(rank.max(1));
    let mut warnings = Vec::new();

    let usable: Vec<usize> = bic_candidates.iter().copied().filter(|&j| j >= 1 && j <= m.min(rank)).collect();
    let full = build_basis(lr, eig, usable.iter().copied().max().unwrap_or(1).max(j1).min(rank.max(1)))?;
    let full_values = full.values_at(pooled)?;

    let mut bic_table = Vec::new();
    let mut fits = Vec::new();
    for &j in bic_candidates {
        if !usable.contains(&j) {
            let note = format!("J = {j} exceeds the numerical rank {} of M̂ (m = {m})", rank.min(m));
            warnings.push(note.clone());
            bic_table.push(BicEntry {
                j,
                loglik: None,
                bic: None,
                note: Some(note),
            });
            continue;
        }
        match el_drm::fit_drm_values(pooled, full_values.truncated(j)) {
            Ok(fit) => {
                let b = bic(fit.loglik(), m, j, pooled.len());
                bic_table.push(BicEntry {
                    j,
                    loglik: Some(fit.loglik()),
                    bic: Some(b),
                    note: None,
                });
                fits.push((j, fit));
            }
            Err(e) => {
                let note = format!("J = {j} excluded: {e}");
                warnings.push(note.clone());
                bic_table.push(BicEntry {
                    j,
                    loglik: None,
                    bic: None,
                    note: Some(e.to_string()),
                });
            }
        }
    }
    let mut j2 = None;
    let mut best = f64::INFINITY;
    for entry in &bic_table {
        if let Some(b) = entry.bic {
            if b < best {
                best = b;
                j2 = Some(entry.j);
            }
        }
    }
    let Some(j2) = j2 else {
        return Err(DrmError::Selection {
            op: OP,
            msg: format!("every BIC candidate failed: {}", warnings.join("; ")),
        });
    };
    let d = j1.max(j2);
    let basis = full.truncated(d)?;
    Ok(DSelectionOutcome {
        selection: DSelection {
            d,
            j1,
            j2,
            threshold,
            variance_explained: shares,
            bic: bic_table,
            warnings,
        },
        basis,
        fits,
    })
}

/// Principal angles (radians, ascending) between the spans of two sets of
/// vectors tabulated at common points. Computed from the singular values of
/// the residual after projecting one span onto the other, which keeps
/// small angles accurate.
pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if small.is_empty() {
        return Vec::new();
    }
    let n = big[0].len();
    let to_matrix = |cols: &[Vec<f64>]| DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let qa = to_matrix(big).qr().q();
    let qb = to_matrix(small).qr().q();
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let sv = residual.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.min(1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multisample::MultiSample;
    use approx::assert_relative_eq;

    fn two_normal_pool() -> PooledEmpirical {
        let a: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| -1.0 + 0.13 * i as f64).collect();
        MultiSample::new(vec![a, b]).unwrap().pool()
    }

    fn normal_ln(mean: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| -0.5 * (x - mean) * (x - mean) - 0.918_938_533_204_672_8
    }

    #[test]
    fn exact_normal_log_ratio() {
        let pooled = two_normal_pool();
        let (f0, f1) = (normal_ln(0.0), normal_ln(1.0));
        let lr = LogRatioSet::from_log_density_fn(&pooled, 2, move |k, x| if k == 0 { f0(x) } else { f1(x) }).unwrap();
        let mean: f64 = pooled.points().iter().map(|x| x - 0.5).sum::<f64>() / pooled.len() as f64;
        for (i, &x) in pooled.points().iter().enumerate() {
            assert!((lr.plain(1)[i] - ((x - 0.5) - mean)).abs() < 1e-12);
            assert!((lr.centered(0)[i] + lr.centered(1)[i]).abs() < 1e-15);
            assert_eq!(lr.plain(0)[i], 0.0);
        }
        let v: f64 =
            pooled.points().iter().map(|x| (x - 0.5 - mean) * (x - 0.5 - mean)).sum::<f64>() / pooled.len() as f64;
        let m = m_hat(&lr);
        assert_relative_eq!(m.get(0, 0), v / 4.0, max_relative = 1e-12);
        assert_relative_eq!(m.get(0, 1), -v / 4.0, max_relative = 1e-12);
        let eig = eigensystem(&m).unwrap();
        assert_relative_eq!(eig.values[0], v / 2.0, max_relative = 1e-12);
        assert!(eig.values[1].abs() < 1e-14);

        let basis = build_basis(&lr, &eig, 1).unwrap();
        let vals = basis.values_at(&pooled).unwrap().column(0);
        let norm: f64 = vals.iter().map(|v| v * v).sum::<f64>() / pooled.len() as f64;
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
        // Proportional to Q̂_1^c.
        let ratio = vals[3] / lr.centered(1)[3];
        for i in 0..pooled.len() {
            assert!((vals[i] - ratio * lr.centered(1)[i]).abs() < 1e-12);
        }
        assert!(matches!(build_basis(&lr, &eig, 2), Err(DrmError::Usage { .. })));
    }

    #[test]
    fn two_by_two_closed_form() {
        let v = 1.25;
        let m = MHat::from_matrix(DMatrix::from_row_slice(2, 2, &[v / 4.0, -v / 4.0, -v / 4.0, v / 4.0])).unwrap();
        let eig = eigensystem(&m).unwrap();
        assert_relative_eq!(eig.values[0], 0.625, max_relative = 1e-14);
        assert!(eig.values[1].abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(eig.vectors[0][0], s, max_relative = 1e-14);
        assert_relative_eq!(eig.vectors[0][1], -s, max_relative = 1e-14);
    }

    #[test]
    fn scaled_identity_and_zero() {
        let eig = eigensystem(&MHat::from_matrix(DMatrix::identity(4, 4) * 3.0).unwrap()).unwrap();
        assert!(eig.values.iter().all(|&l| (l - 3.0).abs() < 1e-14));
        let z = MHat::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let e1 = eigensystem(&z).unwrap();
        let e2 = eigensystem(&z).unwrap();
        assert!(e1.values.iter().all(|&l| l == 0.0));
        assert_eq!(e1, e2);
        assert_eq!(e1.rank(), 0);
    }

    #[test]
    fn threshold_and_bic_choices() {
        let shares = variance_explained(&[0.80, 0.15, 0.05, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(threshold_choice(&shares, 0.95), 2);
        assert_relative_eq!(bic(-100.0, 5, 2, 3000), 200.0 + 10.0 * 3000f64.ln(), max_relative = 1e-15);
        assert!((bic(-100.0, 5, 2, 3000) - 280.06).abs() < 0.005);
    }

    #[test]
    fn identical_samples_give_zero_ratios() {
        let s: Vec<f64> = (0..25).map(|i| (i as f64 * 0.77).sin()).collect();
        let ms = MultiSample::new(vec![s.clone(), s.clone(), s]).unwrap();
        let kdes = ms.samples().iter().map(|s| KdeEstimate::fit(s, 0.3, None, 75).unwrap()).collect();
        let lr = LogRatioSet::from_kdes(kdes, &ms.pool()).unwrap();
        for k in 0..3 {
            assert!(lr.centered(k).iter().all(|&v| v == 0.0));
        }
        let m = m_hat(&lr);
        assert!(m.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn principal_angles_of_known_spans() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let a = vec![x.clone(), x.iter().map(|v| v * v).collect()];
        let b = vec![x.iter().map(|v| 2.0 * v * v - v).collect(), x.iter().map(|v| v + v * v).collect()];
        assert!(principal_angles(&a, &b).iter().all(|&t| t < 1e-12));
        let c = vec![x.iter().map(|v| v * v * v).collect::<Vec<_>>()];
        assert!(principal_angles(&a, &c)[0] > 1e-3);
    }
}
