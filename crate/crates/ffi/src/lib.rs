//! C interface to `drm-core`.
//!
//! Every function returns a status code and writes results through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free` function. After a nonzero status, `drm_last_error_message`
//! describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use drm_core::estimators::{drm_quantile, DrmDensity};
use drm_core::pipeline::{self, AdaptiveConfig, DPolicy};
use drm_core::{fitted_cdf, AdaptiveBasis, Basis, DrmError, ErrorKind, FixedBasis, Layout, MultiSample};

pub const DRM_OK: i32 = 0;
pub const DRM_ERR_USAGE: i32 = 1;
pub const DRM_ERR_DATA: i32 = 2;
pub const DRM_ERR_NUMERIC: i32 = 3;
pub const DRM_ERR_NULL: i32 = 4;
pub const DRM_ERR_PANIC: i32 = 5;

/// Samples from several populations.
pub struct DrmMultiSample {
    inner: MultiSample,
}

enum BasisKind {
    Fixed(FixedBasis),
    Adaptive(AdaptiveBasis),
}

/// Basis functions `q(x)`, fixed or data-adaptive.
pub struct DrmBasis {
    inner: BasisKind,
}

impl DrmBasis {
    fn as_basis(&self) -> &dyn Basis {
        match &self.inner {
            BasisKind::Fixed(b) => b,
            BasisKind::Adaptive(b) => b,
        }
    }
}

/// A fitted density ratio model.
pub struct DrmFit {
    inner: drm_core::DrmFit,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Core(DrmError),
    Null(&'static str),
    Usage(String),
}

impl From<DrmError> for Failure {
    fn from(e: DrmError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DRM_OK
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            match e.kind() {
                ErrorKind::Usage => DRM_ERR_USAGE,
                ErrorKind::Data => DRM_ERR_DATA,
                ErrorKind::Numeric => DRM_ERR_NUMERIC,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            DRM_ERR_NULL
        }
        Ok(Err(Failure::Usage(msg))) => {
            set_error(&msg);
            DRM_ERR_USAGE
        }
        Err(_) => {
            set_error("internal panic");
            DRM_ERR_PANIC
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Usage(format!("{what} is not valid UTF-8")))
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn drm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds samples from `k` populations stored back to back in `values`;
/// population `r` has `sizes[r]` observations.
///
/// # Safety
/// `values` must point to `sum(sizes)` doubles and `sizes` to `k` sizes.
#[no_mangle]
pub unsafe extern "C" fn drm_multisample_new(
    values: *const f64,
    sizes: *const usize,
    k: usize,
    out_ms: *mut *mut DrmMultiSample,
) -> i32 {
    guard(|| {
        let slot = out(out_ms, "out_ms")?;
        if sizes.is_null() {
            return Err(Failure::Null("sizes"));
        }
        let sizes = std::slice::from_raw_parts(sizes, k);
        let total: usize = sizes.iter().sum();
        if values.is_null() && total > 0 {
            return Err(Failure::Null("values"));
        }
        let flat = if total == 0 { &[][..] } else { std::slice::from_raw_parts(values, total) };
        let mut samples = Vec::with_capacity(k);
        let mut at = 0;
        for &n in sizes {
            samples.push(flat[at..at + n].to_vec());
            at += n;
        }
        let ms = MultiSample::new(samples)?;
        *slot = Box::into_raw(Box::new(DrmMultiSample { inner: ms }));
        Ok(())
    })
}

/// Reads a CSV file; `layout` is `"long"` or `"wide"`.
///
/// # Safety
/// `path` and `layout` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn drm_multisample_load_csv(
    path: *const c_char,
    layout: *const c_char,
    out_ms: *mut *mut DrmMultiSample,
) -> i32 {
    guard(|| {
        let slot = out(out_ms, "out_ms")?;
        let path = string(path, "path")?;
        let layout: Layout = string(layout, "layout")?.parse()?;
        let ms = MultiSample::load_csv(&path, layout)?;
        *slot = Box::into_raw(Box::new(DrmMultiSample { inner: ms }));
        Ok(())
    })
}

/// # Safety
/// `ms` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn drm_multisample_num_populations(ms: *const DrmMultiSample, out_k: *mut usize) -> i32 {
    guard(|| {
        *out(out_k, "out_k")? = deref(ms, "ms")?.inner.num_populations();
        Ok(())
    })
}

/// # Safety
/// `ms` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn drm_multisample_free(ms: *mut DrmMultiSample) {
    if !ms.is_null() {
        drop(Box::from_raw(ms));
    }
}

/// Fixed basis from a comma-separated term list such as `"x,x2"`, or
/// `"rich"`.
///
/// # Safety
/// `spec` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_fixed(spec: *const c_char, out_basis: *mut *mut DrmBasis) -> i32 {
    guard(|| {
        let slot = out(out_basis, "out_basis")?;
        let spec = string(spec, "spec")?;
        let b = if spec == "rich" { FixedBasis::rich() } else { FixedBasis::parse(&spec)? };
        *slot = Box::into_raw(Box::new(DrmBasis {
            inner: BasisKind::Fixed(b),
        }));
        Ok(())
    })
}

/// Data-adaptive basis with the default pipeline; `d = 0` selects the
/// dimension automatically.
///
/// # Safety
/// `ms` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_adaptive(ms: *const DrmMultiSample, d: usize, out_basis: *mut *mut DrmBasis) -> i32 {
    guard(|| {
        let slot = out(out_basis, "out_basis")?;
        let ms = deref(ms, "ms")?;
        let cfg = AdaptiveConfig {
            d: if d == 0 { DPolicy::Auto } else { DPolicy::Fixed(d) },
            ..AdaptiveConfig::default()
        };
        let fitted = pipeline::fit_adaptive(&ms.inner, &cfg)?;
        *slot = Box::into_raw(Box::new(DrmBasis {
            inner: BasisKind::Adaptive(fitted.basis),
        }));
        Ok(())
    })
}

/// Loads an adaptive basis written by `drm_basis_save` or `drm basis --dump`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_load(path: *const c_char, out_basis: *mut *mut DrmBasis) -> i32 {
    guard(|| {
        let slot = out(out_basis, "out_basis")?;
        let b = AdaptiveBasis::load(Path::new(&string(path, "path")?))?;
        *slot = Box::into_raw(Box::new(DrmBasis {
            inner: BasisKind::Adaptive(b),
        }));
        Ok(())
    })
}

/// Writes an adaptive basis as JSON. Fixed bases are rejected.
///
/// # Safety
/// `basis` must be a handle from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_save(basis: *const DrmBasis, path: *const c_char) -> i32 {
    guard(|| {
        let basis = deref(basis, "basis")?;
        let path = string(path, "path")?;
        match &basis.inner {
            BasisKind::Adaptive(b) => Ok(b.save(Path::new(&path))?),
            BasisKind::Fixed(_) => Err(Failure::Usage("only adaptive bases can be saved".into())),
        }
    })
}

/// # Safety
/// `basis` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_dim(basis: *const DrmBasis, out_d: *mut usize) -> i32 {
    guard(|| {
        *out(out_d, "out_d")? = deref(basis, "basis")?.as_basis().dim();
        Ok(())
    })
}

/// Evaluates `q(x)` into `values`, which holds `len >= dim` doubles.
///
/// # Safety
/// `basis` must be a handle from this library; `values` must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_eval(basis: *const DrmBasis, x: f64, values: *mut f64, len: usize) -> i32 {
    guard(|| {
        let b = deref(basis, "basis")?.as_basis();
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        if len < b.dim() {
            return Err(Failure::Usage(format!("values holds {len} entries, basis has {}", b.dim())));
        }
        b.eval_into(x, std::slice::from_raw_parts_mut(values, b.dim()))?;
        Ok(())
    })
}

/// # Safety
/// `basis` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn drm_basis_free(basis: *mut DrmBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Fits the model by empirical likelihood.
///
/// # Safety
/// `ms` and `basis` must be handles from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_fit(ms: *const DrmMultiSample, basis: *const DrmBasis, out_fit: *mut *mut DrmFit) -> i32 {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        let ms = deref(ms, "ms")?;
        let basis = deref(basis, "basis")?;
        let fit = drm_core::fit_drm(&ms.inner, basis.as_basis())?;
        *slot = Box::into_raw(Box::new(DrmFit { inner: fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_loglik(fit: *const DrmFit, out_ll: *mut f64) -> i32 {
    guard(|| {
        *out(out_ll, "out_ll")? = deref(fit, "fit")?.inner.loglik();
        Ok(())
    })
}

/// Copies `α_1..α_m` into `alpha` (length `m`) and the rows of `β`
/// into `beta` (length `m * d`, row-major).
///
/// # Safety
/// `fit` must be a handle from this library; the buffers must hold the
/// stated lengths.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_params(
    fit: *const DrmFit,
    alpha: *mut f64,
    alpha_len: usize,
    beta: *mut f64,
    beta_len: usize,
) -> i32 {
    guard(|| {
        let p = deref(fit, "fit")?.inner.params();
        let flat_beta: Vec<f64> = p.beta.iter().flatten().copied().collect();
        if alpha_len < p.alpha.len() || beta_len < flat_beta.len() {
            return Err(Failure::Usage(format!(
                "buffers too small: need {} and {}",
                p.alpha.len(),
                flat_beta.len()
            )));
        }
        if (alpha.is_null() && !p.alpha.is_empty()) || (beta.is_null() && !flat_beta.is_empty()) {
            return Err(Failure::Null("alpha or beta"));
        }
        if !p.alpha.is_empty() {
            std::slice::from_raw_parts_mut(alpha, p.alpha.len()).copy_from_slice(&p.alpha);
        }
        if !flat_beta.is_empty() {
            std::slice::from_raw_parts_mut(beta, flat_beta.len()).copy_from_slice(&flat_beta);
        }
        Ok(())
    })
}

/// `inf { t : Ĝ_r(t) >= tau }`.
///
/// # Safety
/// `fit` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_quantile(fit: *const DrmFit, r: usize, tau: f64, out_q: *mut f64) -> i32 {
    guard(|| {
        let slot = out(out_q, "out_q")?;
        *slot = drm_quantile(&deref(fit, "fit")?.inner, r, tau)?;
        Ok(())
    })
}

/// `Ĝ_r(x)`.
///
/// # Safety
/// `fit` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_cdf(fit: *const DrmFit, r: usize, x: f64, out_p: *mut f64) -> i32 {
    guard(|| {
        let slot = out(out_p, "out_p")?;
        *slot = fitted_cdf(&deref(fit, "fit")?.inner, r, x)?;
        Ok(())
    })
}

/// Smoothed density of population `r` at `x`.
///
/// # Safety
/// `fit` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_density(fit: *const DrmFit, r: usize, x: f64, out_g: *mut f64) -> i32 {
    guard(|| {
        let slot = out(out_g, "out_g")?;
        *slot = DrmDensity::new(&deref(fit, "fit")?.inner, r)?.eval(x);
        Ok(())
    })
}

/// # Safety
/// `fit` must be a handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn drm_fit_free(fit: *mut DrmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
