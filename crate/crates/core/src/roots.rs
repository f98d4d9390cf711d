//! Derivative-free 1-D solvers shared by the calibration routines.

/// Absolute tolerance on the bracket width.
pub const ABS_TOL: f64 = 1e-10;
/// Iteration cap for every bisection in the crate.
pub const MAX_ITER: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (a zero at either end is
/// accepted). Stops when the bracket is narrower than `tol` or `f` vanishes.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return None;
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Grows `hi` geometrically until `pred(hi)` holds; returns `None` after
/// `MAX_ITER` doublings.
pub fn expand_until<P: FnMut(f64) -> bool>(mut hi: f64, mut pred: P) -> Option<f64> {
    for _ in 0..MAX_ITER {
        if pred(hi) {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..MAX_ITER {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}
