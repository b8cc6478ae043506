//! Density ratio model fitting with a data-adaptive basis.

pub mod baselines;
pub mod cli;
pub mod basis;
pub mod el_drm;
pub mod error;
pub mod estimators;
pub mod fpca_basis;
pub mod kde;
mod kernel;
pub mod multisample;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod simbench;
pub mod stats;

pub use basis::{Basis, BasisMatrix, FixedBasis, PolyTerm};
pub use el_drm::{fit_drm, fitted_cdf, DrmFit, DrmParams};
pub use error::{DrmError, ErrorKind, Result};
pub use fpca_basis::{AdaptiveBasis, EigenSystem, LogRatioSet, MHat};
pub use kde::KdeEstimate;
pub use kernel::phi;
pub use multisample::{Layout, MultiSample, PooledEmpirical};
