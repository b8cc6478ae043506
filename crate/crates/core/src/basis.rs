//! Basis functions `q(x)` for the density ratio model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DrmError, Result};
use crate::kernel::phi;
use crate::multisample::PooledEmpirical;

/// Row-major `n × d` table of basis values, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl BasisMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DrmError::usage("basis::from_rows", "ragged basis rows"));
        }
        Ok(Self {
            n: rows.len(),
            d,
            data: rows.concat(),
        })
    }

    /// Builds from column vectors (`columns[j][i] = q_j(x_i)`).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(DrmError::usage("basis::from_columns", "columns differ in length"));
        }
        let mut m = Self::zeros(n, d);
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.data[i * d + j] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.d + j]).collect()
    }

    /// Keeps the first `d` columns.
    pub fn truncated(&self, d: usize) -> Self {
        let d = d.min(self.d);
        let mut out = Self::zeros(self.n, d);
        for i in 0..self.n {
            out.row_mut(i).copy_from_slice(&self.row(i)[..d]);
        }
        out
    }

    /// Applies `q -> A q + b` to every row.
    pub fn affine(&self, a: &[Vec<f64>], b: &[f64]) -> Self {
        let d = a.len();
        let mut out = Self::zeros(self.n, d);
        for i in 0..self.n {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (r, (arow, br)) in a.iter().zip(b).enumerate() {
                dst[r] = br + arow.iter().zip(src).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        out
    }
}

/// A vector-valued function `q: R -> R^d`.
pub trait Basis: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()>;

    fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Values at every pooled point, in pooled order.
    fn values_at(&self, pooled: &PooledEmpirical) -> Result<BasisMatrix> {
        let mut m = BasisMatrix::zeros(pooled.len(), self.dim());
        for (i, &x) in pooled.points().iter().enumerate() {
            self.eval_into(x, m.row_mut(i))?;
        }
        Ok(m)
    }

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolyTerm {
    X,
    X2,
    LogX,
    Log1pAbs,
    SqrtAbs,
    /// `φ(x - c)`.
    NormPdf(f64),
}

impl PolyTerm {
    fn eval(self, x: f64) -> Result<f64> {
        Ok(match self {
            PolyTerm::X => x,
            PolyTerm::X2 => x * x,
            PolyTerm::LogX => {
                if x <= 0.0 {
                    return Err(DrmError::domain("basis::logx", format!("log x needs x > 0, got {x}")));
                }
                x.ln()
            }
            PolyTerm::Log1pAbs => x.abs().ln_1p(),
            PolyTerm::SqrtAbs => x.abs().sqrt(),
            PolyTerm::NormPdf(c) => phi(x - c),
        })
    }
}

impl fmt::Display for PolyTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolyTerm::X => write!(f, "x"),
            PolyTerm::X2 => write!(f, "x2"),
            PolyTerm::LogX => write!(f, "logx"),
            PolyTerm::Log1pAbs => write!(f, "log1p_abs"),
            PolyTerm::SqrtAbs => write!(f, "sqrt_abs"),
            PolyTerm::NormPdf(c) => write!(f, "normpdf:{c}"),
        }
    }
}

impl FromStr for PolyTerm {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "x" => PolyTerm::X,
            "x2" => PolyTerm::X2,
            "logx" => PolyTerm::LogX,
            "log1p_abs" => PolyTerm::Log1pAbs,
            "sqrt_abs" => PolyTerm::SqrtAbs,
            _ => {
                if let Some(c) = s.strip_prefix("normpdf:") {
                    let c = c
                        .parse()
                        .map_err(|_| DrmError::usage("basis::parse", format!("bad normpdf centre in {s:?}")))?;
                    PolyTerm::NormPdf(c)
                } else {
                    return Err(DrmError::usage("basis::parse", format!("unknown basis term {s:?}")));
                }
            }
        })
    }
}

/// Fixed basis assembled from named terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedBasis {
    terms: Vec<PolyTerm>,
}

impl FixedBasis {
    pub fn new(terms: Vec<PolyTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(DrmError::usage("basis::new", "a fixed basis needs at least one term"));
        }
        Ok(Self { terms })
    }

    /// `(|x|^{1/2}, x, x², log(1 + |x|))`.
    pub fn rich() -> Self {
        Self {
            terms: vec![PolyTerm::SqrtAbs, PolyTerm::X, PolyTerm::X2, PolyTerm::Log1pAbs],
        }
    }

    /// Comma-separated terms, e.g. `x,x2` or `normpdf:-0.6745,normpdf:0.6745`.
    /// A `normpdf:<c>` centre may itself not contain commas.
    pub fn parse(spec: &str) -> Result<Self> {
        let terms = spec
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }
}

impl Basis for FixedBasis {
    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x)?;
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let t: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        format!("poly:{}", t.join(","))
    }
}
