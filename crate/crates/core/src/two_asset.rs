//! Forward and reverse exchange functions.
//!
//! `F(δ)` is the amount of asset `j` received for tendering `δ` of asset `i`;
//! `G(λ)` is the amount of `i` that must be tendered to receive `λ` of `j`.
//! The same scalar root problems also price baskets: trades along fixed
//! directions, liquidation in the numeraire, and purchases paid in it.

use serde::{Deserialize, Serialize};

use crate::engine::{acceptance_tolerance, CfmmState, Trade};
use crate::error::{check_dim, Error, Result};
use crate::roots::{self, Root, RootMethod};
use crate::trading_functions::{TradingFunction, TradingFunctionSpec};

/// Newton start points are kept this far inside the reserve bound.
const START_SHRINK: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;
const BISECT_MAX_ITER: usize = 2000;
const MAX_DOUBLINGS: usize = 1100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeMethod {
    /// Closed form when one exists, otherwise Newton with bisection fallback.
    #[default]
    Auto,
    Newton,
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeQuote {
    pub input_amount: f64,
    pub output_amount: f64,
    /// `output / input`, 0 for zero input.
    pub realized_rate: f64,
    pub method: RootMethod,
    pub iterations: usize,
    /// `φ` after the (fee-discounted) exchange minus `φ(R)`.
    pub residual: f64,
}

impl ExchangeQuote {
    fn new(input: f64, output: f64, method: RootMethod, iterations: usize, residual: f64) -> Self {
        let realized_rate = if input > 0.0 { output / input } else { 0.0 };
        Self { input_amount: input, output_amount: output, realized_rate, method, iterations, residual }
    }
}

fn axpy(base: &[f64], a: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + a * d).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[k] = 1.0;
    e
}

/// `φ(x) − φ0`, with points outside the domain mapped to `-∞`.
fn excess(phi: &TradingFunctionSpec, x: &[f64], phi0: f64) -> f64 {
    if x.iter().any(|v| *v < 0.0) {
        return f64::NEG_INFINITY;
    }
    phi.value(x).map_or(f64::NEG_INFINITY, |v| v - phi0)
}

fn excess_and_slope(phi: &TradingFunctionSpec, x: &[f64], dir: &[f64], phi0: f64) -> (f64, f64) {
    let v = excess(phi, x, phi0);
    match phi.gradient(x) {
        Ok(g) if v.is_finite() => (v, dot(&g, dir)),
        _ => (v, f64::NAN),
    }
}

fn run_root(
    method: ExchangeMethod,
    newton: impl FnOnce() -> Result<Root>,
    bisect: impl FnOnce() -> Result<Root>,
) -> Result<Root> {
    match method {
        ExchangeMethod::Bisection => bisect(),
        ExchangeMethod::Auto | ExchangeMethod::Newton => newton().or_else(|_| bisect()),
    }
}

/// Largest `λ` with `φ(base − λ·dir) = φ(R)`, saturating at the first
/// reserve bound. `start` is a Newton start at or right of the root.
fn receive_root(
    s: &CfmmState,
    base: &[f64],
    dir: &[f64],
    start: f64,
    method: ExchangeMethod,
    trace: Option<&mut Vec<f64>>,
) -> Result<Root> {
    let phi = s.phi();
    let phi0 = s.phi_value()?;
    let tol = acceptance_tolerance(phi0);
    let lam_max = base
        .iter()
        .zip(dir)
        .filter(|(_, d)| **d > 0.0)
        .map(|(b, d)| b / d)
        .fold(f64::INFINITY, f64::min);
    if !lam_max.is_finite() {
        return Err(Error::invalid("receive direction must be nonzero"));
    }
    let at = |lam: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(b, d)| (b - lam * d).max(0.0)).collect()
    };
    let h0 = excess(phi, base, phi0);
    if h0 <= 0.0 {
        return Ok(Root { x: 0.0, residual: h0, iterations: 0, method: RootMethod::ClosedForm });
    }
    let h_max = excess(phi, &at(lam_max), phi0);
    if h_max >= 0.0 {
        return Ok(Root { x: lam_max, residual: h_max, iterations: 0, method: RootMethod::ClosedForm });
    }
    let hi = lam_max * (1.0 - START_SHRINK);
    let x0 = start.clamp(0.0, hi);
    let f_df = |lam: f64| {
        let (v, slope) = excess_and_slope(phi, &at(lam), dir, phi0);
        (v, -slope)
    };
    run_root(
        method,
        || roots::newton(f_df, x0, 0.0, lam_max, tol, NEWTON_MAX_ITER, trace),
        || roots::bisect(|lam| excess(phi, &at(lam), phi0), 0.0, lam_max, BISECT_MAX_ITER),
    )
}

/// Smallest `δ ≥ 0` with `φ(base + γδ·dir) = φ(R)`. `start` is a Newton start
/// at or left of the root.
fn tender_root(s: &CfmmState, base: &[f64], dir: &[f64], start: f64, method: ExchangeMethod) -> Result<Root> {
    let phi = s.phi();
    let gamma = s.gamma();
    let phi0 = s.phi_value()?;
    let tol = acceptance_tolerance(phi0);
    let at = |d: f64| axpy(base, gamma * d, dir);
    let h0 = excess(phi, base, phi0);
    if h0 >= 0.0 {
        return Ok(Root { x: 0.0, residual: h0, iterations: 0, method: RootMethod::ClosedForm });
    }
    let scale = 1e-8 * (1.0 + s.reserves().iter().sum::<f64>());
    let mut hi = (2.0 * start).max(scale);
    let mut grown = 0;
    while excess(phi, &at(hi), phi0) < 0.0 {
        grown += 1;
        hi *= 2.0;
        if grown > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::Infeasible("no finite tender reaches the invariant".into()));
        }
    }
    let x0 = start.clamp(0.0, hi);
    let f_df = |d: f64| {
        let (v, slope) = excess_and_slope(phi, &at(d), dir, phi0);
        (v, gamma * slope)
    };
    run_root(
        method,
        || roots::newton(f_df, x0, 0.0, hi, tol, NEWTON_MAX_ITER, None),
        || roots::bisect(|d| excess(phi, &at(d), phi0), 0.0, hi, BISECT_MAX_ITER),
    )
}

fn check_amount(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("amount must be nonnegative and finite, got {x}")));
    }
    Ok(())
}

fn check_basket(b: &[f64], n: usize) -> Result<()> {
    check_dim(n, b.len())?;
    if b.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid("baskets must be nonnegative and finite"));
    }
    Ok(())
}

fn closed_form_forward(s: &CfmmState, i: usize, j: usize, delta: f64) -> Option<f64> {
    let r = s.reserves();
    let gamma = s.gamma();
    match s.phi() {
        TradingFunctionSpec::Sum { .. } => Some((gamma * delta).min(r[j])),
        TradingFunctionSpec::Linear { p } => Some((gamma * delta * p[i] / p[j]).min(r[j])),
        TradingFunctionSpec::GeometricMean { w } => {
            // R_j (1 − (R_i / (R_i + γδ))^{w_i/w_j})
            let e = -(w[i] / w[j]) * (gamma * delta / r[i]).ln_1p();
            Some(-r[j] * e.exp_m1())
        }
        _ => None,
    }
}

fn closed_form_reverse(s: &CfmmState, i: usize, j: usize, lam: f64) -> Option<f64> {
    let r = s.reserves();
    let gamma = s.gamma();
    match s.phi() {
        TradingFunctionSpec::Sum { .. } => Some(lam / gamma),
        TradingFunctionSpec::Linear { p } => Some(lam * p[j] / (gamma * p[i])),
        TradingFunctionSpec::GeometricMean { w } => {
            // (R_i/γ) ((R_j / (R_j − λ))^{w_j/w_i} − 1)
            let e = -(w[j] / w[i]) * (-lam / r[j]).ln_1p();
            Some(r[i] / gamma * e.exp_m1())
        }
        _ => None,
    }
}

fn forward_residual(s: &CfmmState, i: usize, j: usize, delta: f64, lam: f64) -> Result<f64> {
    let mut x = s.reserves().to_vec();
    x[i] += s.gamma() * delta;
    x[j] = (x[j] - lam).max(0.0);
    Ok(excess(s.phi(), &x, s.phi_value()?))
}

/// `F(δ)`: amount of asset `j` received for tendering `delta` of asset `i`.
pub fn forward_exchange(s: &CfmmState, i: usize, j: usize, delta: f64) -> Result<ExchangeQuote> {
    forward_exchange_with(s, i, j, delta, ExchangeMethod::Auto)
}

pub fn forward_exchange_with(
    s: &CfmmState,
    i: usize,
    j: usize,
    delta: f64,
    method: ExchangeMethod,
) -> Result<ExchangeQuote> {
    forward_impl(s, i, j, delta, method, None)
}

/// Newton iterates of the forward exchange, starting from `δE_ij`.
pub fn forward_newton_iterates(s: &CfmmState, i: usize, j: usize, delta: f64) -> Result<Vec<f64>> {
    let mut trace = Vec::new();
    forward_impl(s, i, j, delta, ExchangeMethod::Newton, Some(&mut trace))?;
    Ok(trace)
}

fn forward_impl(
    s: &CfmmState,
    i: usize,
    j: usize,
    delta: f64,
    method: ExchangeMethod,
    trace: Option<&mut Vec<f64>>,
) -> Result<ExchangeQuote> {
    s.check_pair(i, j)?;
    check_amount(delta)?;
    let rate = s.exchange_rate(i, j)?;
    if delta == 0.0 {
        return Ok(ExchangeQuote::new(0.0, 0.0, RootMethod::ClosedForm, 0, 0.0));
    }
    if method == ExchangeMethod::Auto {
        if let Some(lam) = closed_form_forward(s, i, j, delta) {
            let res = forward_residual(s, i, j, delta, lam)?;
            return Ok(ExchangeQuote::new(delta, lam, RootMethod::ClosedForm, 0, res));
        }
    }
    let n = s.n();
    let mut base = s.reserves().to_vec();
    base[i] += s.gamma() * delta;
    let root = receive_root(s, &base, &unit(n, j), delta * rate, method, trace)?;
    Ok(ExchangeQuote::new(delta, root.x, root.method, root.iterations, root.residual))
}

/// `G(λ)`: amount of asset `i` that must be tendered to receive `lam` of `j`.
pub fn reverse_exchange(s: &CfmmState, i: usize, j: usize, lam: f64) -> Result<ExchangeQuote> {
    reverse_exchange_with(s, i, j, lam, ExchangeMethod::Auto)
}

pub fn reverse_exchange_with(
    s: &CfmmState,
    i: usize,
    j: usize,
    lam: f64,
    method: ExchangeMethod,
) -> Result<ExchangeQuote> {
    s.check_pair(i, j)?;
    check_amount(lam)?;
    let rate = s.exchange_rate(i, j)?;
    if lam == 0.0 {
        return Ok(ExchangeQuote::new(0.0, 0.0, RootMethod::ClosedForm, 0, 0.0));
    }
    let r_j = s.reserves()[j];
    let saturating = s.phi().has_constant_gradient()
        || matches!(s.phi(), TradingFunctionSpec::HybridSumGeoMean { alpha, .. } if *alpha < 1.0);
    if lam > r_j || (lam == r_j && !saturating) {
        return Err(Error::Infeasible(format!("cannot receive {lam} with only {r_j} in reserve")));
    }
    if method == ExchangeMethod::Auto {
        if let Some(d) = closed_form_reverse(s, i, j, lam) {
            let res = forward_residual(s, i, j, d, lam)?;
            return Ok(ExchangeQuote::new(d, lam, RootMethod::ClosedForm, 0, res));
        }
    }
    let mut base = s.reserves().to_vec();
    base[j] -= lam;
    let root = tender_root(s, &base, &unit(s.n(), i), lam / rate, method)?;
    Ok(ExchangeQuote::new(root.x, lam, root.method, root.iterations, root.residual))
}

/// Exchange rate `γ∇φᵀΔ̃ / ∇φᵀΛ̃` between two basket directions.
pub fn basket_rate(s: &CfmmState, tender_dir: &[f64], receive_dir: &[f64]) -> Result<f64> {
    let g = s.unscaled_prices()?;
    Ok(s.gamma() * dot(&g, tender_dir) / dot(&g, receive_dir))
}

/// Multiple `λ` of `receive_dir` obtained for tendering `delta · tender_dir`.
pub fn basket_forward(
    s: &CfmmState,
    tender_dir: &[f64],
    receive_dir: &[f64],
    delta: f64,
) -> Result<ExchangeQuote> {
    basket_forward_with(s, tender_dir, receive_dir, delta, ExchangeMethod::Auto)
}

pub fn basket_forward_with(
    s: &CfmmState,
    tender_dir: &[f64],
    receive_dir: &[f64],
    delta: f64,
    method: ExchangeMethod,
) -> Result<ExchangeQuote> {
    let n = s.n();
    check_basket(tender_dir, n)?;
    check_basket(receive_dir, n)?;
    check_amount(delta)?;
    if receive_dir.iter().all(|x| *x == 0.0) {
        return Err(Error::invalid("receive direction must be nonzero"));
    }
    if tender_dir.iter().zip(receive_dir).any(|(a, b)| *a > 0.0 && *b > 0.0) {
        return Err(Error::invalid("basket directions must have disjoint support"));
    }
    let rate = basket_rate(s, tender_dir, receive_dir)?;
    if delta == 0.0 {
        return Ok(ExchangeQuote::new(0.0, 0.0, RootMethod::ClosedForm, 0, 0.0));
    }
    let base = axpy(s.reserves(), s.gamma() * delta, tender_dir);
    let root = receive_root(s, &base, receive_dir, delta * rate, method, None)?;
    Ok(ExchangeQuote::new(delta, root.x, root.method, root.iterations, root.residual))
}

/// Numeraire received for tendering `delta_basket`.
pub fn liquidation_value(s: &CfmmState, delta_basket: &[f64]) -> Result<ExchangeQuote> {
    let n = s.n();
    check_basket(delta_basket, n)?;
    if delta_basket[n - 1] != 0.0 {
        return Err(Error::invalid("the liquidated basket cannot contain the numeraire"));
    }
    basket_forward(s, delta_basket, &unit(n, n - 1), 1.0).map(|q| {
        let value = if delta_basket.iter().all(|x| *x == 0.0) { 0.0 } else { q.output_amount };
        ExchangeQuote { output_amount: value, realized_rate: value, ..q }
    })
}

/// Numeraire that must be tendered to receive `lambda_basket`.
pub fn purchase_cost(s: &CfmmState, lambda_basket: &[f64]) -> Result<ExchangeQuote> {
    let n = s.n();
    check_basket(lambda_basket, n)?;
    if lambda_basket[n - 1] != 0.0 {
        return Err(Error::invalid("the purchased basket cannot contain the numeraire"));
    }
    let r = s.reserves();
    if lambda_basket.iter().zip(r).any(|(l, r)| *l > 0.0 && l >= r) {
        return Err(Error::Infeasible("purchased basket must be strictly below the reserves".into()));
    }
    if lambda_basket.iter().all(|x| *x == 0.0) {
        return Ok(ExchangeQuote::new(0.0, 0.0, RootMethod::ClosedForm, 0, 0.0));
    }
    let p = s.prices()?;
    let start = dot(&p, lambda_basket) / s.gamma();
    let base: Vec<f64> = r.iter().zip(lambda_basket).map(|(r, l)| r - l).collect();
    let root = tender_root(s, &base, &unit(n, n - 1), start, ExchangeMethod::Auto)?;
    Ok(ExchangeQuote::new(root.x, 1.0, root.method, root.iterations, root.residual))
}

/// Smallest extra amount of asset `k` to add to the tender basket of `t` so
/// that the trade passes the acceptance test.
pub fn complete_tender(s: &CfmmState, t: &Trade, k: usize) -> Result<ExchangeQuote> {
    let n = s.n();
    check_dim(n, t.len())?;
    if k >= n {
        return Err(Error::invalid(format!("asset index {k} out of range")));
    }
    if t.lambda.iter().zip(s.reserves()).any(|(l, r)| l > r) {
        return Err(Error::Infeasible("receive basket exceeds the reserves".into()));
    }
    let base: Vec<f64> = (0..n)
        .map(|m| s.reserves()[m] + s.gamma() * t.delta[m] - t.lambda[m])
        .collect();
    let root = tender_root(s, &base, &unit(n, k), 0.0, ExchangeMethod::Auto)?;
    Ok(ExchangeQuote::new(root.x, 0.0, root.method, root.iterations, root.residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geo(w: Vec<f64>, r: Vec<f64>, gamma: f64) -> CfmmState {
        CfmmState::new(r, gamma, TradingFunctionSpec::geometric_mean(w).unwrap()).unwrap()
    }

    fn fig1() -> CfmmState {
        geo(vec![0.2, 0.8], vec![1.0, 100.0], 0.997)
    }

    #[test]
    fn sum_closed_forms() {
        let s = CfmmState::new(vec![3.0, 5.0], 0.997, TradingFunctionSpec::sum(2).unwrap()).unwrap();
        assert_relative_eq!(forward_exchange(&s, 0, 1, 2.0).unwrap().output_amount, 1.994, max_relative = 1e-15);
        assert_eq!(forward_exchange(&s, 0, 1, 100.0).unwrap().output_amount, 5.0);
        assert_relative_eq!(reverse_exchange(&s, 0, 1, 1.994).unwrap().input_amount, 2.0, max_relative = 1e-15);
        assert!(matches!(reverse_exchange(&s, 0, 1, 5.5), Err(Error::Infeasible(_))));
    }

    #[test]
    fn zero_amounts() {
        let s = fig1();
        assert_eq!(forward_exchange(&s, 0, 1, 0.0).unwrap().output_amount, 0.0);
        assert_eq!(reverse_exchange(&s, 0, 1, 0.0).unwrap().input_amount, 0.0);
        let q = forward_exchange(&s, 0, 1, 0.0).unwrap();
        assert_eq!(q.realized_rate, 0.0);
    }

    #[test]
    fn geomean_forward_matches_oracle() {
        // 30-digit evaluation of 100 (1 − (1/1.997)^{1/4})
        let s = fig1();
        let oracle = 15.878_795_262_993_237;
        for m in [ExchangeMethod::Auto, ExchangeMethod::Newton, ExchangeMethod::Bisection] {
            let q = forward_exchange_with(&s, 0, 1, 1.0, m).unwrap();
            assert_relative_eq!(q.output_amount, oracle, max_relative = 1e-12);
        }
        let q = forward_exchange_with(&s, 0, 1, 1.0, ExchangeMethod::Newton).unwrap();
        assert_eq!(q.method, RootMethod::Newton);
        let q = forward_exchange_with(&s, 0, 1, 1.0, ExchangeMethod::Bisection).unwrap();
        assert_eq!(q.method, RootMethod::Bisection);
    }

    #[test]
    fn geomean_reverse_matches_oracle() {
        let s = fig1();
        for m in [ExchangeMethod::Auto, ExchangeMethod::Newton, ExchangeMethod::Bisection] {
            let q = reverse_exchange_with(&s, 0, 1, 15.878, m).unwrap();
            assert_relative_eq!(q.input_amount, 0.999_924_257_798_622_6, max_relative = 1e-11);
        }
        assert!(matches!(reverse_exchange(&s, 0, 1, 100.0), Err(Error::Infeasible(_))));
        assert!(matches!(reverse_exchange(&s, 0, 1, 150.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn curve_like_newton_is_monotone() {
        let s = CfmmState::new(vec![2.0, 3.0, 1.5], 0.98, TradingFunctionSpec::curve_like(2.0, 3).unwrap()).unwrap();
        for delta in [0.01, 0.5, 3.0, 40.0] {
            let it = forward_newton_iterates(&s, 0, 1, delta).unwrap();
            assert!(it.windows(2).all(|w| w[1] <= w[0]), "{it:?}");
            let newton = forward_exchange_with(&s, 0, 1, delta, ExchangeMethod::Newton).unwrap();
            let bis = forward_exchange_with(&s, 0, 1, delta, ExchangeMethod::Bisection).unwrap();
            assert_relative_eq!(newton.output_amount, bis.output_amount, max_relative = 1e-10);
            assert!(newton.output_amount < 3.0);
            let back = reverse_exchange(&s, 0, 1, newton.output_amount).unwrap();
            assert!((back.input_amount - delta).abs() <= 1e-8 * (1.0 + delta));
        }
    }

    #[test]
    fn slope_at_zero() {
        let s = fig1();
        let e = s.exchange_rate(0, 1).unwrap();
        let h = 1e-6 * s.reserves()[0];
        let f = forward_exchange(&s, 0, 1, h).unwrap().output_amount;
        assert!((f / h - e).abs() <= 1e-4 * e);
        let g = reverse_exchange(&s, 0, 1, h).unwrap().input_amount;
        assert!((g / h - 1.0 / e).abs() <= 1e-4 / e);
    }

    #[test]
    fn basket_reduces_to_pair() {
        let s = geo(vec![0.25; 4], vec![4.0, 5.0, 6.0, 7.0], 0.997);
        let pair = forward_exchange(&s, 1, 3, 0.7).unwrap().output_amount;
        let basket = basket_forward(&s, &unit(4, 1), &unit(4, 3), 0.7).unwrap().output_amount;
        assert_relative_eq!(pair, basket, max_relative = 1e-12);
        assert_eq!(basket_forward(&s, &unit(4, 1), &unit(4, 3), 0.0).unwrap().output_amount, 0.0);
    }

    #[test]
    fn basket_example() {
        // independent 30-digit root of the acceptance residual
        let s = geo(vec![0.25; 4], vec![4.0, 5.0, 6.0, 7.0], 0.997);
        let q = basket_forward(&s, &[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], 0.5).unwrap();
        assert_relative_eq!(q.output_amount, 0.651_070_811_359_397_2, max_relative = 1e-11);
        let e = basket_rate(&s, &[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(q.output_amount <= e * 0.5);
    }

    #[test]
    fn liquidation_and_purchase() {
        let s = geo(vec![0.25; 4], vec![4.0, 5.0, 6.0, 7.0], 0.997);
        let liq = liquidation_value(&s, &[1.0, 0.0, 0.0, 0.0]).unwrap().output_amount;
        assert_relative_eq!(liq, 1.396_637_982_789_673_8, max_relative = 1e-11);
        assert!(liq <= 0.997 * 7.0 / 4.0);

        let cost = purchase_cost(&s, &[2.0, 4.0, 0.0, 0.0]).unwrap().input_amount;
        assert_relative_eq!(cost, 63.189_568_706_118_36, max_relative = 1e-11);
        let p = s.prices().unwrap();
        assert!(cost >= (2.0 * p[0] + 4.0 * p[1]) / 0.997);

        assert_eq!(liquidation_value(&s, &[0.0; 4]).unwrap().output_amount, 0.0);
        assert_eq!(purchase_cost(&s, &[0.0; 4]).unwrap().input_amount, 0.0);
        assert!(matches!(purchase_cost(&s, &[4.0, 0.0, 0.0, 0.0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sum_liquidation_and_purchase() {
        let s = CfmmState::new(vec![4.0, 5.0, 20.0], 0.9, TradingFunctionSpec::sum(3).unwrap()).unwrap();
        let liq = liquidation_value(&s, &[1.0, 2.0, 0.0]).unwrap().output_amount;
        assert_relative_eq!(liq, 0.9 * 3.0, max_relative = 1e-12);
        let cost = purchase_cost(&s, &[1.0, 2.0, 0.0]).unwrap().input_amount;
        assert_relative_eq!(cost, 3.0 / 0.9, max_relative = 1e-12);
    }

    #[test]
    fn tender_completion() {
        let s = geo(vec![0.25; 4], vec![4.0, 5.0, 6.0, 7.0], 0.997);
        let mut t = Trade::new(vec![0.0, 0.0, 10.0, 0.0], vec![2.0, 4.0, 0.0, 0.0]).unwrap();
        let q = complete_tender(&s, &t, 3).unwrap();
        // with γ folded in the boundary is Δ4 = (420/(6+γΔ3) − 7)/γ
        let expected = (420.0 / (6.0 + 0.997 * 10.0) - 7.0) / 0.997;
        assert_relative_eq!(q.input_amount, expected, max_relative = 1e-10);
        t.delta[3] = q.input_amount;
        assert!(s.check_trade(&t).unwrap().accepted);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = fig1();
        assert!(forward_exchange(&s, 0, 0, 1.0).is_err());
        assert!(forward_exchange(&s, 0, 2, 1.0).is_err());
        assert!(forward_exchange(&s, 0, 1, -1.0).is_err());
        assert!(basket_forward(&s, &[1.0, 0.0], &[0.0, 0.0], 1.0).is_err());
        assert!(basket_forward(&s, &[1.0, 1.0], &[0.0, 1.0], 1.0).is_err());
    }
}
