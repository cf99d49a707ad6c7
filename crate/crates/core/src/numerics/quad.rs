//! Adaptive Simpson quadrature.

use crate::error::{FintError, Result};
use crate::expr::ScalarExpr;

const MAX_DEPTH: u32 = 40;

/// `∫[a,b] f` by adaptive Simpson with combined absolute and relative
/// tolerance `tol`. `b < a` yields the negated integral.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(FintError::Quadrature("non-finite interval".into()));
    }
    if !(tol > 0.0) {
        return Err(FintError::Quadrature(format!("invalid tolerance {tol}")));
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let whole = simpson(a, b, fa, fm, fb);
    let eps = tol * whole.abs().max(1.0);
    let floor = 64.0 * f64::EPSILON * whole.abs().max(1.0);
    recurse(&f, a, b, fa, fm, fb, whole, eps, floor, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    floor: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * eps.max(floor) {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(FintError::Quadrature(format!(
            "no convergence on [{a}, {b}] after {MAX_DEPTH} bisections"
        )));
    }
    let half = 0.5 * eps;
    Ok(recurse(f, a, m, fa, flm, fm, left, half, floor, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, half, floor, depth - 1)?)
}

/// `∫[a,b] f(τ) dτ` for a scalar expression.
pub fn adaptive_quad(f: &ScalarExpr, a: f64, b: f64, tol: f64) -> Result<f64> {
    adaptive_simpson(|t| f.eval(t), a, b, tol)
}
