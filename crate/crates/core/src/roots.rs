//! Scalar root finding used by the exchange functions and slippage logic.
//!
//! Callers map points outside a trading function's domain to `±∞` before
//! handing a closure in here, so every evaluation is total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    ClosedForm,
    Newton,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: RootMethod,
}

/// Newton steps taken after the residual first drops below tolerance, as long
/// as the residual keeps shrinking.
const POLISH_STEPS: usize = 3;

/// Bisection on `[lo, hi]` until the bracket cannot be split further.
///
/// `f(lo)` and `f(hi)` must not share a strict sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<Root> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0, method: RootMethod::Bisection });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0, method: RootMethod::Bisection });
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Convergence(format!(
            "bracket [{lo}, {hi}] does not straddle a root (f = {f_lo}, {f_hi})"
        )));
    }
    let mut best = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for it in 1..=max_iter {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            return Ok(Root { x: best.0, residual: best.1, iterations: it, method: RootMethod::Bisection });
        }
        let f_mid = f(mid);
        if f_mid.is_finite() && f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid == 0.0 {
            return Ok(Root { x: mid, residual: 0.0, iterations: it, method: RootMethod::Bisection });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(Root { x: best.0, residual: best.1, iterations: max_iter, method: RootMethod::Bisection })
}

/// Undamped Newton iteration confined to `[lo, hi]`.
///
/// `f_df` returns the residual and its derivative. Fails (so the caller can
/// fall back to bisection) if an iterate leaves the bracket, the derivative
/// degenerates, or `max_iter` passes without the residual reaching `ftol`.
/// Every iterate, including `x0`, is pushed onto `trace` when one is given.
pub fn newton<F: FnMut(f64) -> (f64, f64)>(
    mut f_df: F,
    x0: f64,
    lo: f64,
    hi: f64,
    ftol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Root> {
    let mut x = x0;
    let (mut fx, mut dfx) = f_df(x);
    if let Some(t) = trace.as_deref_mut() {
        t.push(x);
    }
    let mut polish = 0;
    for it in 0..max_iter {
        if fx == 0.0 {
            return Ok(Root { x, residual: fx, iterations: it, method: RootMethod::Newton });
        }
        if !fx.is_finite() || !dfx.is_finite() || dfx == 0.0 {
            return Err(Error::Convergence(format!("Newton degenerated at x = {x}")));
        }
        let next = x - fx / dfx;
        if !(lo..=hi).contains(&next) {
            return Err(Error::Convergence(format!("Newton iterate {next} left [{lo}, {hi}]")));
        }
        let (f_next, df_next) = f_df(next);
        if fx.abs() <= ftol {
            // already converged; keep stepping only while it still helps
            if !(f_next.abs() < fx.abs()) || polish >= POLISH_STEPS {
                return Ok(Root { x, residual: fx, iterations: it, method: RootMethod::Newton });
            }
            polish += 1;
        }
        x = next;
        fx = f_next;
        dfx = df_next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(x);
        }
    }
    if fx.abs() <= ftol {
        Ok(Root { x, residual: fx, iterations: max_iter, method: RootMethod::Newton })
    } else {
        Err(Error::Convergence(format!("Newton did not converge in {max_iter} iterations")))
    }
}
