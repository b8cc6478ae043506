//! Empirical-likelihood fitting of the density ratio model
//! `g_r(x) = g_0(x) exp(α_r + β_rᵀ q(x))`.
//!
//! The profile log-EL is
//! `ℓ̃(θ) = -Σ_i log Σ_r n_r exp(η_r(x_i)) + Σ_i η_{k(i)}(x_i)`
//! over pooled points `x_i` drawn from population `k(i)`, with
//! `η_r = α_r + β_rᵀ q` and `η_0 = 0`. It is concave, and is maximized by
//! damped Newton iterations on a whitened copy of the basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisMatrix};
use crate::error::{DrmError, Result};
use crate::multisample::{MultiSample, PooledEmpirical};

pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 200;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const ILL_CONDITIONED: f64 = 1e-10;
const POLISH_STEPS: usize = 3;

/// `α_1..α_m` and the rows `β_1..β_m`; the base population has `α_0 = 0`,
/// `β_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl DrmParams {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            beta: vec![vec![0.0; d]; m],
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// Flattened as `[α_1, β_1…, α_2, β_2…, …]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.m() * (1 + self.d()));
        for (a, b) in self.alpha.iter().zip(&self.beta) {
            v.push(*a);
            v.extend_from_slice(b);
        }
        v
    }

    pub fn from_vec(theta: &[f64], m: usize, d: usize) -> Self {
        let mut p = Self::zeros(m, d);
        for r in 0..m {
            let blk = &theta[r * (1 + d)..(r + 1) * (1 + d)];
            p.alpha[r] = blk[0];
            p.beta[r].copy_from_slice(&blk[1..]);
        }
        p
    }
}

struct Problem<'a> {
    z: &'a BasisMatrix,
    origin: &'a [usize],
    ln_counts: Vec<f64>,
    m: usize,
    d: usize,
}

struct Evaluation {
    loglik: f64,
    grad: Vec<f64>,
    /// Negative Hessian, `A = -∇²ℓ̃`.
    neg_hess: Option<DMatrix<f64>>,
}

impl<'a> Problem<'a> {
    fn new(z: &'a BasisMatrix, origin: &'a [usize], counts: &[usize]) -> Result<Self> {
        const OP: &str = "el_drm::fit_drm";
        if counts.is_empty() || counts.iter().any(|&c| c == 0) {
            return Err(DrmError::usage(OP, "every population needs at least one observation"));
        }
        if origin.len() != z.rows() || counts.iter().sum::<usize>() != z.rows() {
            return Err(DrmError::usage(OP, "basis rows, origins and counts disagree"));
        }
        if origin.iter().any(|&k| k >= counts.len()) {
            return Err(DrmError::usage(OP, "population index out of range"));
        }
        Ok(Self {
            z,
            origin,
            ln_counts: counts.iter().map(|&c| (c as f64).ln()).collect(),
            m: counts.len() - 1,
            d: z.dim(),
        })
    }

    fn dim(&self) -> usize {
        self.m * (1 + self.d)
    }

    /// `η_r(x_i)` for `r = 0..=m` into `eta`.
    fn eta(&self, theta: &[f64], q: &[f64], eta: &mut [f64]) {
        let d = self.d;
        eta[0] = 0.0;
        for r in 1..=self.m {
            let blk = &theta[(r - 1) * (1 + d)..r * (1 + d)];
            let mut v = blk[0];
            for j in 0..d {
                v += blk[1 + j] * q[j];
            }
            eta[r] = v;
        }
    }

    /// `log Σ_r n_r exp(η_r)`, stabilized.
    fn lse(&self, eta: &[f64]) -> f64 {
        let mx = eta.iter().zip(&self.ln_counts).map(|(e, l)| e + l).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = eta.iter().zip(&self.ln_counts).map(|(e, l)| (e + l - mx).exp()).sum();
        mx + s.ln()
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let mut eta = vec![0.0; self.m + 1];
        let mut ll = 0.0;
        for i in 0..self.z.rows() {
            self.eta(theta, self.z.row(i), &mut eta);
            ll += eta[self.origin[i]] - self.lse(&eta);
        }
        ll
    }

    fn evaluate(&self, theta: &[f64], with_hessian: bool) -> Evaluation {
        let (m, d) = (self.m, self.d);
        let p = self.dim();
        let b = 1 + d;
        let mut eta = vec![0.0; m + 1];
        let mut w = vec![0.0; m + 1];
        let mut zx = vec![1.0; b];
        let mut grad = vec![0.0; p];
        let mut hess = if with_hessian { Some(DMatrix::zeros(p, p)) } else { None };
        let mut ll = 0.0;
        for i in 0..self.z.rows() {
            let q = self.z.row(i);
            self.eta(theta, q, &mut eta);
            let lse = self.lse(&eta);
            let k = self.origin[i];
            ll += eta[k] - lse;
            for r in 0..=m {
                w[r] = (eta[r] + self.ln_counts[r] - lse).exp();
            }
            zx[1..].copy_from_slice(q);
            for r in 1..=m {
                let resid = if k == r { 1.0 - w[r] } else { -w[r] };
                let off = (r - 1) * b;
                for a in 0..b {
                    grad[off + a] += resid * zx[a];
                }
            }
            if let Some(h) = hess.as_mut() {
                for r in 1..=m {
                    for s in r..=m {
                        let c = if r == s { w[r] - w[r] * w[s] } else { -w[r] * w[s] };
                        let (ro, so) = ((r - 1) * b, (s - 1) * b);
                        for a in 0..b {
                            let ca = c * zx[a];
                            for bb in 0..b {
                                h[(ro + a, so + bb)] += ca * zx[bb];
                            }
                        }
                    }
                }
            }
        }
        if let Some(h) = hess.as_mut() {
            for i in 0..p {
                for j in 0..i {
                    h[(i, j)] = h[(j, i)];
                }
            }
        }
        Evaluation {
            loglik: ll,
            grad,
            neg_hess: hess,
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Profile log-EL at `params`. Basis rows are in pooled order, with
/// `origin[i]` the population of row `i`.
pub fn profile_loglik(params: &DrmParams, values: &BasisMatrix, origin: &[usize], counts: &[usize]) -> Result<f64> {
    let problem = Problem::new(values, origin, counts)?;
    check_params(params, problem.m, problem.d)?;
    let ll = problem.loglik(&params.to_vec());
    if !ll.is_finite() {
        return Err(DrmError::numeric("el_drm::profile_loglik", "objective is not finite"));
    }
    Ok(ll)
}

/// Gradient of [`profile_loglik`] in the flattened layout of
/// [`DrmParams::to_vec`].
pub fn profile_grad(params: &DrmParams, values: &BasisMatrix, origin: &[usize], counts: &[usize]) -> Result<Vec<f64>> {
    let problem = Problem::new(values, origin, counts)?;
    check_params(params, problem.m, problem.d)?;
    let g = problem.evaluate(&params.to_vec(), false).grad;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(DrmError::numeric("el_drm::profile_grad", "gradient is not finite"));
    }
    Ok(g)
}

fn check_params(params: &DrmParams, m: usize, d: usize) -> Result<()> {
    const OP: &str = "el_drm::profile_loglik";
    if params.m() != m || params.beta.iter().any(|b| b.len() != d) {
        return Err(DrmError::usage(OP, format!("expected {m} parameter blocks of basis dimension {d}")));
    }
    if params.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(DrmError::domain(OP, "parameters must be finite"));
    }
    Ok(())
}

/// JSON-facing summary of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub constraint_residual: f64,
}

/// Fitted density ratio model.
#[derive(Debug, Clone)]
pub struct DrmFit {
    params: DrmParams,
    values: BasisMatrix,
    points: Vec<f64>,
    origin: Vec<usize>,
    counts: Vec<usize>,
    weights: Vec<f64>,
    masses: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    loglik: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    constraint_residual: f64,
}

impl DrmFit {
    pub fn params(&self) -> &DrmParams {
        &self.params
    }

    pub fn basis_values(&self) -> &BasisMatrix {
        &self.values
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_populations(&self) -> usize {
        self.counts.len()
    }

    /// `p̂_i`, the base-population masses.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `p̂_i exp(α̂_r + β̂_rᵀ q(x_i))`, the masses of `Ĝ_r`.
    pub fn masses(&self, r: usize) -> &[f64] {
        &self.masses[r]
    }

    /// Running sums of [`DrmFit::masses`] over the pooled points.
    pub fn cumulative(&self, r: usize) -> &[f64] {
        &self.cumulative[r]
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    /// `max_r |Σ_i p̂_i exp(η_r(x_i)) - 1|`.
    pub fn constraint_residual(&self) -> f64 {
        self.constraint_residual
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            alpha: self.params.alpha.clone(),
            beta: self.params.beta.clone(),
            loglik: self.loglik,
            converged: self.converged,
            iterations: self.iterations,
            grad_norm: self.grad_norm,
            constraint_residual: self.constraint_residual,
        }
    }
}

/// `Ĝ_r(x)`, right-continuous.
pub fn fitted_cdf(fit: &DrmFit, r: usize, x: f64) -> Result<f64> {
    if r >= fit.num_populations() {
        return Err(DrmError::usage(
            "el_drm::fitted_cdf",
            format!("population {r} out of range 0..{}", fit.num_populations()),
        ));
    }
    let idx = fit.points.partition_point(|&p| p <= x);
    Ok(if idx == 0 { 0.0 } else { fit.cumulative[r][idx - 1] })
}

pub fn fit_drm(ms: &MultiSample, basis: &dyn Basis) -> Result<DrmFit> {
    let pooled = ms.pool();
    let values = basis.values_at(&pooled)?;
    fit_drm_values(&pooled, values)
}

/// Affine reparameterization `z = L⁻¹ D⁻¹ (q - μ)` with `D` the column
/// standard deviations (divisor `N`) and `L Lᵀ` the column correlation
/// matrix, so the working basis is centered with identity covariance.
struct Whitening {
    mu: Vec<f64>,
    sd: Vec<f64>,
    l: DMatrix<f64>,
}

impl Whitening {
    fn fit(values: &BasisMatrix) -> Result<(BasisMatrix, Self)> {
        const OP: &str = "el_drm::fit_drm";
        let (n, d) = (values.rows(), values.dim());
        let mut mu = vec![0.0; d];
        let mut sd = vec![0.0; d];
        for j in 0..d {
            let col = values.column(j);
            if col.iter().any(|v| !v.is_finite()) {
                return Err(DrmError::numeric(OP, format!("basis column {j} has non-finite values")));
            }
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            if !(v.sqrt() > 1e-300) || v.sqrt() <= 1e-12 * m.abs() {
                return Err(DrmError::rank(OP, format!("basis column {j} is constant over the pooled data")));
            }
            mu[j] = m;
            sd[j] = v.sqrt();
        }
        let mut y = DMatrix::zeros(n, d);
        for i in 0..n {
            for (j, v) in values.row(i).iter().enumerate() {
                y[(i, j)] = (v - mu[j]) / sd[j];
            }
        }
        let corr = (y.transpose() * &y) / n as f64;
        let rank_err = || DrmError::rank(OP, "basis columns are linearly dependent over the pooled data");
        let l = corr.clone().cholesky().ok_or_else(rank_err)?.l();
        let pivots: Vec<f64> = (0..d).map(|j| l[(j, j)]).collect();
        if pivots.iter().any(|&p| !(p > 1e-7)) {
            return Err(rank_err());
        }
        let zt = l.solve_lower_triangular(&y.transpose()).ok_or_else(rank_err)?;
        let mut z = BasisMatrix::zeros(n, d);
        for i in 0..n {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                *v = zt[(j, i)];
            }
        }
        Ok((z, Self { mu, sd, l }))
    }

    fn d(&self) -> usize {
        self.mu.len()
    }

    /// Parameters for the original basis from working-basis ones.
    fn to_original(&self, theta_z: &[f64], m: usize) -> Vec<f64> {
        let d = self.d();
        let mut out = theta_z.to_vec();
        for r in 0..m {
            let blk = &theta_z[r * (1 + d)..(r + 1) * (1 + d)];
            let bz = DVector::from_column_slice(&blk[1..]);
            let by = self.l.transpose().solve_upper_triangular(&bz).expect("nonsingular factor");
            let o = &mut out[r * (1 + d)..(r + 1) * (1 + d)];
            let mut shift = 0.0;
            for j in 0..d {
                o[1 + j] = by[j] / self.sd[j];
                shift += o[1 + j] * self.mu[j];
            }
            o[0] = blk[0] - shift;
        }
        out
    }

    /// Gradient with respect to original parameters from the working one.
    fn grad_to_original(&self, g_z: &[f64], m: usize) -> Vec<f64> {
        let d = self.d();
        let mut out = g_z.to_vec();
        for r in 0..m {
            let ga = g_z[r * (1 + d)];
            let gy = &self.l * DVector::from_column_slice(&g_z[r * (1 + d) + 1..(r + 1) * (1 + d)]);
            for j in 0..d {
                out[r * (1 + d) + 1 + j] = ga * self.mu[j] + gy[j] * self.sd[j];
            }
        }
        out
    }
}

fn solve_shifted(a: &DMatrix<f64>, mu: f64, g: &[f64]) -> Option<Vec<f64>> {
    let p = a.nrows();
    let shifted = a + DMatrix::identity(p, p) * mu;
    let chol = shifted.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(g));
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}

/// Backtracking from a full step along `dir`; returns the accepted point.
fn line_search(problem: &Problem, theta: &[f64], ll: f64, g: &[f64], dir: &[f64]) -> Option<Vec<f64>> {
    let slope: f64 = g.iter().zip(dir).map(|(a, b)| a * b).sum();
    if !(slope > 0.0) {
        return None;
    }
    // Below this the objective change is lost in rounding; accept a step
    // that does not visibly decrease it.
    let noise = 1e-13 * (1.0 + ll.abs());
    let mut t = 1.0;
    for _ in 0..MAX_HALVINGS {
        let cand: Vec<f64> = theta.iter().zip(dir).map(|(a, b)| a + t * b).collect();
        let ll_new = problem.loglik(&cand);
        if ll_new.is_finite() && (ll_new >= ll + ARMIJO_C * t * slope || (t * slope < noise && ll_new >= ll - noise)) {
            return Some(cand);
        }
        t *= 0.5;
    }
    None
}

/// One damped Newton step, falling back to step-halved gradient ascent.
fn ascent_step(problem: &Problem, theta: &[f64], ev: &Evaluation) -> Option<Vec<f64>> {
    let a = ev.neg_hess.as_ref().expect("hessian requested");
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.max().max(0.0);
    let lmin = eig.eigenvalues.min();
    let mut mu = if lmin < ILL_CONDITIONED * lmax { ILL_CONDITIONED * lmax - lmin.min(0.0) } else { 0.0 };
    for _ in 0..12 {
        if let Some(dir) = solve_shifted(a, mu, &ev.grad) {
            if let Some(next) = line_search(problem, theta, ev.loglik, &ev.grad, &dir) {
                return Some(next);
            }
        }
        mu = (mu * 10.0).max(1e-8 * lmax.max(1.0));
    }
    let scale = if lmax > 0.0 { 1.0 / lmax } else { 1.0 };
    let dir: Vec<f64> = ev.grad.iter().map(|g| g * scale).collect();
    line_search(problem, theta, ev.loglik, &ev.grad, &dir)
}

/// Fits the model from basis values tabulated at the pooled points.
pub fn fit_drm_values(pooled: &PooledEmpirical, values: BasisMatrix) -> Result<DrmFit> {
    const OP: &str = "el_drm::fit_drm";
    let counts = pooled.sizes().to_vec();
    let origin = pooled.origin().to_vec();
    let m = counts.len() - 1;
    if values.rows() != pooled.len() {
        return Err(DrmError::usage(OP, "basis values do not match the pooled data"));
    }
    let d = values.dim();
    if m > 0 && d == 0 {
        return Err(DrmError::usage(OP, "basis dimension must be at least 1"));
    }
    let (z, white) = if m > 0 {
        let (z, w) = Whitening::fit(&values)?;
        (z, Some(w))
    } else {
        (values.clone(), None)
    };
    let orig_grad = |g: &[f64]| white.as_ref().map_or_else(|| g.to_vec(), |w| w.grad_to_original(g, m));
    let problem = Problem::new(&z, &origin, &counts)?;
    let p = problem.dim();

    let mut theta = vec![0.0; p];
    let mut ev = problem.evaluate(&theta, true);
    let mut iterations = 0;
    let mut converged = p == 0;
    while !converged && iterations < MAX_ITER {
        if sup_norm(&orig_grad(&ev.grad)) < GRAD_TOL {
            converged = true;
            break;
        }
        let Some(next) = ascent_step(&problem, &theta, &ev) else {
            break;
        };
        theta = next;
        ev = problem.evaluate(&theta, true);
        iterations += 1;
    }
    if converged && p > 0 {
        // Extra full Newton steps tighten the constraints well past the
        // stopping tolerance; kept only while the gradient shrinks.
        for _ in 0..POLISH_STEPS {
            let a = ev.neg_hess.as_ref().expect("hessian requested");
            let Some(dir) = solve_shifted(a, 0.0, &ev.grad) else { break };
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let next = problem.evaluate(&cand, true);
            if !(sup_norm(&next.grad) < sup_norm(&ev.grad)) || !next.loglik.is_finite() {
                break;
            }
            theta = cand;
            ev = next;
        }
    }

    let theta_orig = white.as_ref().map_or_else(Vec::new, |w| w.to_original(&theta, m));
    let params = DrmParams::from_vec(&theta_orig, m, d);
    // Certified on the working basis, where `η` is computed without the
    // cancellation a near-collinear original basis would cause; the
    // gradient is mapped to original coordinates by the chain rule.
    let final_ev = problem.evaluate(&theta, false);
    let grad_norm = sup_norm(&orig_grad(&final_ev.grad));
    if !final_ev.loglik.is_finite() {
        return Err(DrmError::numeric(OP, "objective is not finite at the final iterate"));
    }
    if !converged || !(grad_norm < GRAD_TOL) {
        return Err(DrmError::Convergence {
            op: OP,
            iterations,
            grad_norm,
            last_iterate: theta_orig,
        });
    }

    let n = pooled.len();
    let mut eta = vec![0.0; m + 1];
    let mut weights = vec![0.0; n];
    let mut masses = vec![vec![0.0; n]; m + 1];
    for i in 0..n {
        problem.eta(&theta, z.row(i), &mut eta);
        let mx = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let s: f64 = eta.iter().zip(&counts).map(|(e, &c)| c as f64 * (e - mx).exp()).sum();
        weights[i] = (-mx).exp() / s;
        for r in 0..=m {
            masses[r][i] = (eta[r] - mx).exp() / s;
        }
    }
    let cumulative: Vec<Vec<f64>> = masses
        .iter()
        .map(|ms| {
            let mut acc = 0.0;
            ms.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        })
        .collect();
    let constraint_residual = cumulative.iter().map(|c| (c[n - 1] - 1.0).abs()).fold(0.0, f64::max);
    Ok(DrmFit {
        params,
        values,
        points: pooled.points().to_vec(),
        origin,
        counts,
        weights,
        masses,
        cumulative,
        loglik: final_ev.loglik,
        converged,
        iterations,
        grad_norm,
        constraint_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::FixedBasis;
    use approx::assert_relative_eq;

    fn small() -> (MultiSample, BasisMatrix) {
        let ms = MultiSample::new(vec![vec![0.1, 0.7, 1.3, 2.0, 0.4], vec![0.9, 1.8, 2.6, 1.1]]).unwrap();
        let v = FixedBasis::parse("x").unwrap().values_at(&ms.pool()).unwrap();
        (ms, v)
    }

    #[test]
    fn uniform_params_value() {
        let ms = MultiSample::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let pooled = ms.pool();
        let v = FixedBasis::parse("x").unwrap().values_at(&pooled).unwrap();
        let ll = profile_loglik(&DrmParams::zeros(1, 1), &v, pooled.origin(), pooled.sizes()).unwrap();
        assert_relative_eq!(ll, -4.0 * 4f64.ln(), max_relative = 1e-14);
        assert!((ll + 5.545177).abs() < 1e-6);
    }

    #[test]
    fn zero_params_alpha_gradient_cancels() {
        let ms = MultiSample::new(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        let pooled = ms.pool();
        let v = FixedBasis::parse("x").unwrap().values_at(&pooled).unwrap();
        let g = profile_grad(&DrmParams::zeros(1, 1), &v, pooled.origin(), pooled.sizes()).unwrap();
        assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_differences() {
        let (ms, v) = small();
        let pooled = ms.pool();
        let params = DrmParams {
            alpha: vec![0.3],
            beta: vec![vec![-0.7]],
        };
        let g = profile_grad(&params, &v, pooled.origin(), pooled.sizes()).unwrap();
        let theta = params.to_vec();
        for k in 0..theta.len() {
            let mut hi = theta.clone();
            let mut lo = theta.clone();
            hi[k] += 1e-5;
            lo[k] -= 1e-5;
            let f = |t: &[f64]| profile_loglik(&DrmParams::from_vec(t, 1, 1), &v, pooled.origin(), pooled.sizes()).unwrap();
            let fd = (f(&hi) - f(&lo)) / 2e-5;
            assert!((fd - g[k]).abs() < 1e-7 * g[k].abs().max(1.0));
        }
    }

    #[test]
    fn fit_satisfies_constraints() {
        let (ms, _) = small();
        let fit = fit_drm(&ms, &FixedBasis::parse("x").unwrap()).unwrap();
        assert!(fit.converged());
        assert!(fit.grad_norm() < GRAD_TOL);
        assert!(fit.constraint_residual() < 1e-8);
        let total: f64 = fit.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(fit.weights().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(fitted_cdf(&fit, 1, -5.0).unwrap(), 0.0);
        assert!((fitted_cdf(&fit, 1, 50.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_population_fit() {
        let ms = MultiSample::single(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let fit = fit_drm(&ms, &FixedBasis::parse("x").unwrap()).unwrap();
        assert!(fit.params().alpha.is_empty());
        assert!(fit.weights().iter().all(|&p| p == 0.25));
        assert_relative_eq!(fit.loglik(), -4.0 * 4f64.ln(), max_relative = 1e-14);
        assert_eq!(fitted_cdf(&fit, 0, 2.5).unwrap(), 0.5);
    }

    #[test]
    fn flatten_round_trip() {
        let p = DrmParams {
            alpha: vec![1.0, 2.0],
            beta: vec![vec![3.0, 4.0], vec![5.0, 6.0]],
        };
        assert_eq!(p.to_vec(), vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(DrmParams::from_vec(&p.to_vec(), 2, 2), p);
    }
}
