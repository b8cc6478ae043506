use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DrmError>;

/// Broad failure class, used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum DrmError {
    #[error("{op}: usage error: {msg}")]
    Usage { op: &'static str, msg: String },

    #[error("{op}: cannot read {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("multisample::load_csv: parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("{op}: degenerate sample: {msg}")]
    DegenerateSample { op: &'static str, msg: String },

    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("{op}: rank deficiency: {msg}")]
    RankDeficient { op: &'static str, msg: String },

    #[error(
        "fpca_basis::log_ratios: density of population {population} is not positive and finite at x = {point} \
         (enable the KDE floor or widen the bandwidth)"
    )]
    Evaluation { population: usize, point: f64 },

    #[error("{op}: no convergence after {iterations} iterations (gradient sup-norm {grad_norm:.3e})")]
    Convergence {
        op: &'static str,
        iterations: usize,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{op}: numeric error: {msg}")]
    Numeric { op: &'static str, msg: String },

    #[error("{op}: selection failed: {msg}")]
    Selection { op: &'static str, msg: String },

    #[error("simbench::generate: rejection sampler acceptance {rate:.4} below 1% for population {population}")]
    Envelope { population: usize, rate: f64 },

    #[error("baselines::ku_quantile: reconstructed mass {mass:.4} below 0.99")]
    Mass { mass: f64 },

    #[error("simbench::run_benchmark: no repetitions requested")]
    EmptyReport,

    #[error("simbench::run_benchmark: {msg}")]
    Benchmark { msg: String },
}

impl DrmError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            DrmError::Usage { .. } => ErrorKind::Usage,
            DrmError::Io { .. }
            | DrmError::Parse { .. }
            | DrmError::DegenerateSample { .. }
            | DrmError::Domain { .. } => ErrorKind::Data,
            DrmError::RankDeficient { .. }
            | DrmError::Evaluation { .. }
            | DrmError::Convergence { .. }
            | DrmError::Numeric { .. }
            | DrmError::Selection { .. }
            | DrmError::Envelope { .. }
            | DrmError::Mass { .. }
            | DrmError::EmptyReport
            | DrmError::Benchmark { .. } => ErrorKind::Numeric,
        }
    }

    pub(crate) fn usage(op: &'static str, msg: impl Into<String>) -> Self {
        DrmError::Usage { op, msg: msg.into() }
    }

    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        DrmError::Domain { op, msg: msg.into() }
    }

    pub(crate) fn degenerate(op: &'static str, msg: impl Into<String>) -> Self {
        DrmError::DegenerateSample { op, msg: msg.into() }
    }

    pub(crate) fn rank(op: &'static str, msg: impl Into<String>) -> Self {
        DrmError::RankDeficient { op, msg: msg.into() }
    }

    pub(crate) fn numeric(op: &'static str, msg: impl Into<String>) -> Self {
        DrmError::Numeric { op, msg: msg.into() }
    }
}
