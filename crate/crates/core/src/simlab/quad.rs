//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument("quadrature needs finite limits and a positive tolerance".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidArgument("integrand is not finite on the interval".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Iterated adaptive Simpson over the rectangle `[a1, b1] x [a2, b2]`.
pub fn adaptive_simpson_2d(f: &impl Fn(f64, f64) -> f64, (a1, b1): (f64, f64), (a2, b2): (f64, f64), tol: f64) -> Result<f64> {
    let inner_tol = tol / (b1 - a1).abs().max(1.0);
    let outer = |x: f64| adaptive_simpson(&|y| f(x, y), a2, b2, inner_tol).unwrap_or(f64::NAN);
    adaptive_simpson(&outer, a1, b1, tol)
}
