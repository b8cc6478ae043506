//! Adaptive Simpson quadrature and a trapezoid helper.

use crate::error::{DrmError, Result};

const MAX_DEPTH: u32 = 50;

/// `∫_a^b f` to absolute tolerance `tol` by adaptive Simpson with Richardson
/// correction. The interval is first cut into 32 panels so narrow features
/// are not missed by the initial coarse estimate.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    const PANELS: usize = 32;
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == PANELS { b } else { lo + width };
        let (flo, fhi) = (f(lo), f(hi));
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += recurse(&f, lo, hi, flo, fmid, fhi, whole, tol / PANELS as f64, MAX_DEPTH)?;
    }
    if !total.is_finite() {
        return Err(DrmError::numeric("quadrature::adaptive_simpson", "integrand is not finite"));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(DrmError::numeric(
            "quadrature::adaptive_simpson",
            format!("no convergence on [{a}, {b}]"),
        ));
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_density_integrates_to_one() {
        let v = adaptive_simpson(crate::kernel::phi, -10.0, 10.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn polynomial_exact() {
        let v = adaptive_simpson(|x| x * x * x - x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_constant_offset() {
        let vals = vec![0.25; 101];
        assert!((trapezoid(&vals, 0.01) - 0.25).abs() < 1e-14);
    }
}
