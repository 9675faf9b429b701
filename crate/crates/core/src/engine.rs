//! CFMM state and the operations that validate and apply transactions.
//!
//! A state is an immutable value: every operation that changes reserves or
//! provider weights returns a new `CfmmState`. The last asset is the
//! numeraire, so reported prices always end in exactly `1.0`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::roots::{self, RootMethod};
use crate::solver;
use crate::trading_functions::{TradingFunction, TradingFunctionSpec};

/// Relative tolerance of the acceptance test: a trade passes when
/// `φ(R+γΔ−Λ) − φ(R) ≥ −ACCEPT_REL_TOL·(1+|φ(R)|)`.
pub const ACCEPT_REL_TOL: f64 = 1e-9;

/// Maximum relative spread of the componentwise gradient ratios for a
/// liquidity change to count as price preserving.
pub const COLLINEARITY_TOL: f64 = 1e-8;

/// Provider weights must sum to one within this absolute tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weights at or below this are treated as zero and pruned.
const WEIGHT_PRUNE: f64 = 1e-14;

pub fn acceptance_tolerance(phi_before: f64) -> f64 {
    ACCEPT_REL_TOL * (1.0 + phi_before.abs())
}

/// A proposed trade: the basket tendered to the pool and the basket received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub delta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Trade {
    pub fn new(delta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        check_dim(delta.len(), lambda.len())?;
        if delta.iter().chain(&lambda).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid("trade baskets must be nonnegative and finite"));
        }
        Ok(Self { delta, lambda })
    }

    pub fn zero(n: usize) -> Self {
        Self { delta: vec![0.0; n], lambda: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.delta.iter().chain(&self.lambda).all(|&x| x == 0.0)
    }

    pub fn has_disjoint_support(&self) -> bool {
        self.delta.iter().zip(&self.lambda).all(|(d, l)| *d == 0.0 || *l == 0.0)
    }

    /// The trader's net change in holdings, `Λ − Δ`.
    pub fn net(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.delta).map(|(l, d)| l - d).collect()
    }
}

/// Removes assets that appear in both baskets without changing
/// `R + γΔ − Λ`; the trader ends up with at least as much of every asset.
pub fn canonicalize_trade(t: &Trade, gamma: f64) -> Trade {
    let mut out = t.clone();
    for k in 0..t.len() {
        let (d, l) = (t.delta[k], t.lambda[k]);
        if d > 0.0 && l > 0.0 {
            let tau = (gamma * d).min(l);
            if gamma * d <= l {
                out.delta[k] = 0.0;
                out.lambda[k] = l - tau;
            } else {
                out.delta[k] = d - tau / gamma;
                out.lambda[k] = 0.0;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceReason {
    Accepted,
    ReceiveExceedsReserves,
    NegativeReserves,
    InsufficientTender,
    OutsideDomain,
}

impl fmt::Display for AcceptanceReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Accepted => "accepted",
            Self::ReceiveExceedsReserves => "receive basket exceeds reserves",
            Self::NegativeReserves => "discounted post-trade reserves are negative",
            Self::InsufficientTender => "trading function would decrease",
            Self::OutsideDomain => "post-trade reserves leave the trading function's domain",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub accepted: bool,
    pub phi_before: f64,
    /// `φ(R + γΔ − Λ)`; `-inf` outside the domain.
    pub phi_after_discounted: f64,
    pub surplus: f64,
    pub reason: AcceptanceReason,
}

/// Acceptance test against an arbitrary trading function.
pub fn check_acceptance<F: TradingFunction + ?Sized>(
    phi: &F,
    reserves: &[f64],
    gamma: f64,
    trade: &Trade,
) -> Result<AcceptanceReport> {
    let n = reserves.len();
    check_dim(n, trade.len())?;
    let phi_before = phi.value(reserves)?;
    let reject = |reason, after: f64| AcceptanceReport {
        accepted: false,
        phi_before,
        phi_after_discounted: after,
        surplus: after - phi_before,
        reason,
    };
    if trade.lambda.iter().zip(reserves).any(|(l, r)| l > r) {
        return Ok(reject(AcceptanceReason::ReceiveExceedsReserves, f64::NEG_INFINITY));
    }
    let discounted: Vec<f64> = (0..n)
        .map(|i| reserves[i] + gamma * trade.delta[i] - trade.lambda[i])
        .collect();
    if discounted.iter().any(|&x| x < 0.0) {
        return Ok(reject(AcceptanceReason::NegativeReserves, f64::NEG_INFINITY));
    }
    let after = match phi.value(&discounted) {
        Ok(v) => v,
        Err(Error::Domain(_)) => return Ok(reject(AcceptanceReason::OutsideDomain, f64::NEG_INFINITY)),
        Err(e) => return Err(e),
    };
    let surplus = after - phi_before;
    let accepted = surplus >= -acceptance_tolerance(phi_before);
    Ok(AcceptanceReport {
        accepted,
        phi_before,
        phi_after_discounted: after,
        surplus,
        reason: if accepted { AcceptanceReason::Accepted } else { AcceptanceReason::InsufficientTender },
    })
}

/// Reported prices `p = ∇φ(R) / ∇φ(R)_n` for an arbitrary trading function.
pub fn price_vector<F: TradingFunction + ?Sized>(phi: &F, reserves: &[f64]) -> Result<Vec<f64>> {
    require_positive(reserves)?;
    let grad = phi.gradient(reserves)?;
    let last = grad.len() - 1;
    let pn = grad[last];
    let mut p: Vec<f64> = grad.iter().map(|g| g / pn).collect();
    p[last] = 1.0;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiquidityDirection {
    Add,
    Remove,
}

/// Outcome of the price-preservation test `∇φ(R⁺) = α∇φ(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityCheck {
    pub valid: bool,
    /// Mean of the componentwise ratios `∇φ(R⁺)_i / ∇φ(R)_i`.
    pub alpha: f64,
    /// `(max ratio − min ratio) / mean ratio`.
    pub spread: f64,
}

/// Collinearity of `∇φ(after)` with `∇φ(before)`.
pub fn gradient_scale<F: TradingFunction + ?Sized>(
    phi: &F,
    before: &[f64],
    after: &[f64],
) -> Result<LiquidityCheck> {
    let g0 = phi.gradient(before)?;
    let g1 = phi.gradient(after)?;
    let ratios: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a / b).collect();
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = (max - min) / mean;
    Ok(LiquidityCheck { valid: spread <= COLLINEARITY_TOL, alpha: mean, spread })
}

/// Basket accepted by [`CfmmState::max_liquidity_clip`] and what is handed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidityClip {
    pub accepted: Vec<f64>,
    pub remainder: Vec<f64>,
    /// `pᵀΨ⁻ / pᵀR`; equals ν when the accepted basket is `νR`.
    pub value_fraction: f64,
}

fn require_positive(r: &[f64]) -> Result<()> {
    if r.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::domain("prices require strictly positive reserves"));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full DEX state: reserves, fee, trading function and provider weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmmState {
    assets: Vec<String>,
    reserves: Vec<f64>,
    gamma: f64,
    phi: TradingFunctionSpec,
    providers: BTreeMap<String, f64>,
}

impl CfmmState {
    /// A pool with assets labelled `A1..An` owned by a single provider `lp0`.
    pub fn new(reserves: Vec<f64>, gamma: f64, phi: TradingFunctionSpec) -> Result<Self> {
        let assets = (1..=reserves.len()).map(|i| format!("A{i}")).collect();
        let providers = BTreeMap::from([("lp0".to_string(), 1.0)]);
        Self::from_parts(assets, reserves, gamma, phi, providers)
    }

    pub fn from_parts(
        assets: Vec<String>,
        reserves: Vec<f64>,
        gamma: f64,
        phi: TradingFunctionSpec,
        providers: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let state = Self { assets, reserves, gamma, phi, providers };
        state.validate()?;
        Ok(state)
    }

    pub fn with_assets(mut self, assets: Vec<String>) -> Result<Self> {
        self.assets = assets;
        self.validate()?;
        Ok(self)
    }

    pub fn with_providers(mut self, providers: BTreeMap<String, f64>) -> Result<Self> {
        self.providers = providers;
        self.validate()?;
        Ok(self)
    }

    pub fn with_reserves(&self, reserves: Vec<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.reserves = reserves;
        next.validate()?;
        Ok(next)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.reserves.len();
        if n < 2 {
            return Err(Error::invalid("a pool needs at least two assets"));
        }
        check_dim(n, self.assets.len())?;
        check_dim(n, self.phi.dim())?;
        self.phi.validate()?;
        if self.reserves.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid("reserves must be nonnegative and finite"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("fee parameter gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.providers.values().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("provider weights must be nonnegative"));
        }
        let total: f64 = self.providers.values().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("provider weights must sum to 1, got {total}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.reserves.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phi(&self) -> &TradingFunctionSpec {
        &self.phi
    }

    pub fn providers(&self) -> &BTreeMap<String, f64> {
        &self.providers
    }

    pub fn asset_index(&self, label: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == label)
    }

    pub fn phi_value(&self) -> Result<f64> {
        self.phi.value(&self.reserves)
    }

    pub fn acceptance_tolerance(&self) -> Result<f64> {
        Ok(acceptance_tolerance(self.phi_value()?))
    }

    pub fn check_trade(&self, t: &Trade) -> Result<AcceptanceReport> {
        check_acceptance(&self.phi, &self.reserves, self.gamma, t)
    }

    /// Applies `R⁺ = R + Δ − Λ` if the trade passes the acceptance test.
    pub fn execute_trade(&self, t: &Trade) -> Result<CfmmState> {
        let report = self.check_trade(t)?;
        if !report.accepted {
            return Err(Error::RejectedTrade(Box::new(report)));
        }
        let reserves = (0..self.n())
            .map(|i| (self.reserves[i] + t.delta[i] - t.lambda[i]).max(0.0))
            .collect();
        let mut next = self.clone();
        next.reserves = reserves;
        Ok(next)
    }

    pub fn unscaled_prices(&self) -> Result<Vec<f64>> {
        require_positive(&self.reserves)?;
        self.phi.gradient(&self.reserves)
    }

    pub fn prices(&self) -> Result<Vec<f64>> {
        price_vector(&self.phi, &self.reserves)
    }

    /// `E_ij = γ P_i / P_j`: marginal amount of asset `j` per unit of asset `i`.
    pub fn exchange_rate(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        let p = self.unscaled_prices()?;
        Ok(self.gamma * p[i] / p[j])
    }

    pub fn reserve_value(&self) -> Result<f64> {
        Ok(dot(&self.prices()?, &self.reserves))
    }

    pub(crate) fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let n = self.n();
        if i >= n || j >= n {
            return Err(Error::invalid(format!("asset index out of range (n = {n})")));
        }
        if i == j {
            return Err(Error::invalid("exchange needs two distinct assets"));
        }
        Ok(())
    }

    fn shifted(&self, psi: &[f64], direction: LiquidityDirection) -> Result<Vec<f64>> {
        check_dim(self.n(), psi.len())?;
        if psi.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidLiquidityBasket("basket must be nonnegative".into()));
        }
        match direction {
            LiquidityDirection::Add => Ok(self.reserves.iter().zip(psi).map(|(r, p)| r + p).collect()),
            LiquidityDirection::Remove => {
                if psi.iter().zip(&self.reserves).any(|(p, r)| p > r) {
                    return Err(Error::NegativeReserves);
                }
                Ok(self.reserves.iter().zip(psi).map(|(r, p)| r - p).collect())
            }
        }
    }

    /// Tests whether adding or removing `psi` leaves all prices unchanged.
    pub fn check_liquidity_change(&self, psi: &[f64], direction: LiquidityDirection) -> Result<LiquidityCheck> {
        require_positive(&self.reserves)?;
        let after = self.shifted(psi, direction)?;
        gradient_scale(&self.phi, &self.reserves, &after)
    }

    /// Applies a valid liquidity change and updates provider weights pro rata
    /// to the change in reserve value at the current prices.
    pub fn execute_liquidity_change(
        &self,
        provider: &str,
        psi: &[f64],
        direction: LiquidityDirection,
    ) -> Result<CfmmState> {
        let check = self.check_liquidity_change(psi, direction)?;
        if !check.valid {
            return Err(Error::InvalidLiquidityBasket(format!(
                "basket changes prices (gradient ratio spread {:.3e})",
                check.spread
            )));
        }
        let after = self.shifted(psi, direction)?;
        let p = self.prices()?;
        let v = dot(&p, &self.reserves);
        let v_plus = dot(&p, &after);
        if !(v_plus > 0.0) {
            return Err(Error::InvalidLiquidityBasket("change would empty the pool".into()));
        }
        let current = self.providers.get(provider).copied();
        if direction == LiquidityDirection::Remove && current.is_none() {
            return Err(Error::UnknownProvider(provider.to_string()));
        }
        let keep = v / v_plus;
        let mut providers: BTreeMap<String, f64> =
            self.providers.iter().map(|(k, w)| (k.clone(), w * keep)).collect();
        let own = current.unwrap_or(0.0) * keep + (v_plus - v) / v_plus;
        if own < -WEIGHT_SUM_TOL {
            return Err(Error::InsufficientShare {
                provider: provider.to_string(),
                weight: current.unwrap_or(0.0),
                required: (v - v_plus) / v,
            });
        }
        providers.insert(provider.to_string(), own.max(0.0));
        providers.retain(|_, w| *w > WEIGHT_PRUNE);
        let total: f64 = providers.values().sum();
        for w in providers.values_mut() {
            *w /= total;
        }
        let mut next = self.clone();
        next.reserves = after;
        next.providers = providers;
        Ok(next)
    }

    /// Scale `α` with `φ(R + γΔ − αΛ) = φ(R)`; saturates at the largest `α`
    /// keeping `αΛ ≤ R` when the function stays above `φ(R)` there.
    pub fn receive_scale(&self, t: &Trade) -> Result<(f64, RootMethod)> {
        check_dim(self.n(), t.len())?;
        if t.lambda.iter().all(|&l| l == 0.0) {
            return Err(Error::NoValidScale);
        }
        let phi0 = self.phi_value()?;
        let tol = acceptance_tolerance(phi0);
        let alpha_max = t
            .lambda
            .iter()
            .zip(&self.reserves)
            .filter(|(l, _)| **l > 0.0)
            .map(|(l, r)| r / l)
            .fold(f64::INFINITY, f64::min);
        let point = |a: f64| -> Vec<f64> {
            (0..self.n())
                .map(|i| (self.reserves[i] + self.gamma * t.delta[i] - a * t.lambda[i]).max(0.0))
                .collect()
        };
        let residual = |a: f64| match self.phi.value(&point(a)) {
            Ok(v) => v - phi0,
            Err(_) => f64::NEG_INFINITY,
        };
        let at_max = residual(alpha_max);
        if at_max >= 0.0 {
            return Ok((alpha_max, RootMethod::ClosedForm));
        }
        let f_df = |a: f64| {
            let r = point(a);
            match (self.phi.value(&r), self.phi.gradient(&r)) {
                (Ok(v), Ok(g)) => (v - phi0, -dot(&g, &t.lambda)),
                _ => (f64::NEG_INFINITY, f64::NAN),
            }
        };
        let start = alpha_max.min(1.0) * (1.0 - 1e-12);
        let root = roots::newton(f_df, start, 0.0, alpha_max, tol, 100, None)
            .or_else(|_| roots::bisect(residual, 0.0, alpha_max, 200))?;
        if root.residual.abs() > tol && root.residual < 0.0 {
            return Err(Error::NoValidScale);
        }
        Ok((root.x, root.method))
    }

    /// Executes `(Δ, αΛ)` at the unique valid scale `α` if `α ≥ eta`.
    pub fn execute_trade_with_slippage(&self, t: &Trade, eta: f64) -> Result<(CfmmState, f64)> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("slippage threshold must lie in [0, 1], got {eta}")));
        }
        let (alpha, _) = self.receive_scale(t)?;
        if alpha < eta {
            return Err(Error::SlippageExceeded { alpha, eta });
        }
        let lambda = t
            .lambda
            .iter()
            .zip(&self.reserves)
            .map(|(l, r)| (alpha * l).min(*r))
            .collect();
        let scaled = Trade { delta: t.delta.clone(), lambda };
        Ok((self.execute_trade(&scaled)?, alpha))
    }

    /// Largest price-preserving basket `Ψ⁻ ≤ psi_max` that can be added.
    pub fn max_liquidity_clip(&self, psi_max: &[f64]) -> Result<LiquidityClip> {
        check_dim(self.n(), psi_max.len())?;
        if psi_max.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid("maximal basket must be nonnegative"));
        }
        require_positive(&self.reserves)?;
        let p = self.prices()?;
        let value = dot(&p, &self.reserves);
        let accepted: Vec<f64> = if self.phi.has_constant_gradient() {
            // every basket preserves constant prices
            psi_max.to_vec()
        } else if self.phi.is_homogeneous() {
            let nu = psi_max
                .iter()
                .zip(&self.reserves)
                .map(|(m, r)| m / r)
                .fold(f64::INFINITY, f64::min);
            self.reserves.iter().zip(psi_max).map(|(r, m)| (nu * r).min(*m)).collect()
        } else {
            self.clip_by_budget(psi_max, &p)?
        };
        let remainder = psi_max.iter().zip(&accepted).map(|(m, a)| (m - a).max(0.0)).collect();
        Ok(LiquidityClip { value_fraction: dot(&p, &accepted) / value, accepted, remainder })
    }

    /// Bisection on the value budget `M` of the liquidity problem for the
    /// largest `M` whose optimal basket still fits under `psi_max`.
    fn clip_by_budget(&self, psi_max: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let budget_hi = dot(p, psi_max);
        if budget_hi <= 0.0 {
            return Ok(vec![0.0; n]);
        }
        let fits = |m: f64| -> Result<Option<Vec<f64>>> {
            let sol = solver::solve_liquidity_problem(self, m, &solver::SolveOptions::default())?;
            let slack = 1e-12 * (1.0 + m);
            let ok = sol.basket.iter().zip(psi_max).all(|(b, cap)| *b >= -slack && *b <= cap + slack);
            Ok(ok.then_some(sol.basket))
        };
        if let Some(b) = fits(budget_hi)? {
            return Ok(clamp_basket(&b, psi_max));
        }
        let (mut lo, mut hi) = (0.0, budget_hi);
        let mut best = vec![0.0; n];
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match fits(mid)? {
                Some(b) => {
                    lo = mid;
                    best = b;
                }
                None => hi = mid,
            }
            if hi - lo <= 1e-13 * budget_hi {
                break;
            }
        }
        Ok(clamp_basket(&best, psi_max))
    }
}

fn clamp_basket(b: &[f64], cap: &[f64]) -> Vec<f64> {
    b.iter().zip(cap).map(|(x, c)| x.clamp(0.0, *c)).collect()
}
