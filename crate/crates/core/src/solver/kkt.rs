use serde::{Deserialize, Serialize};

use super::ConcaveObjective;
use crate::engine::{CfmmState, Trade};
use crate::error::{check_dim, Result};
use crate::trading_functions::TradingFunction;

/// Multipliers of the trade problem's Lagrangian
/// `L = U(Λ−Δ) + λ(φ(R+γΔ−Λ) − φ(R)) + ωᵀΔ + κᵀΛ + ρᵀ(R+γΔ−Λ)`.
///
/// `rho` belongs to the reserve-nonnegativity constraints; it is nonzero only
/// when an optimal trade drains an asset of a function defined on the
/// boundary (sum, linear). An empty `rho` means all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda: f64,
    pub omega: Vec<f64>,
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub rho: Vec<f64>,
}

impl Multipliers {
    pub fn with_lambda(lambda: f64, n: usize) -> Self {
        Self { lambda, omega: vec![0.0; n], kappa: vec![0.0; n], rho: vec![0.0; n] }
    }
}

/// ∞-norm of the stationarity residual, complementary slackness, and sign
/// violations (multipliers and primal) at `t`.
pub fn kkt_residual(s: &CfmmState, t: &Trade, u: &dyn ConcaveObjective, m: &Multipliers) -> Result<f64> {
    let n = s.n();
    check_dim(n, t.len())?;
    check_dim(n, u.dim())?;
    check_dim(n, m.omega.len())?;
    check_dim(n, m.kappa.len())?;
    let rho = if m.rho.is_empty() { vec![0.0; n] } else { m.rho.clone() };
    check_dim(n, rho.len())?;
    let gamma = s.gamma();
    let r = s.reserves();
    let after: Vec<f64> = (0..n).map(|i| r[i] + gamma * t.delta[i] - t.lambda[i]).collect();
    let clamped: Vec<f64> = after.iter().map(|x| x.max(0.0)).collect();
    let phi = s.phi();
    let slack = phi.value(&clamped)? - s.phi_value()?;
    let p = phi.gradient(&clamped)?;
    let g = u.gradient(&t.net())?;
    let mut worst = 0.0_f64;
    let mut note = |v: f64| worst = worst.max(v.abs());
    for i in 0..n {
        note(-g[i] + m.lambda * gamma * p[i] + gamma * rho[i] + m.omega[i]);
        note(g[i] - m.lambda * p[i] - rho[i] + m.kappa[i]);
        note(m.omega[i] * t.delta[i]);
        note(m.kappa[i] * t.lambda[i]);
        note(rho[i] * after[i]);
        for v in [m.omega[i], m.kappa[i], rho[i], t.delta[i], t.lambda[i], after[i]] {
            note(v.min(0.0));
        }
    }
    note(m.lambda * slack);
    note(m.lambda.min(0.0));
    note(slack.min(0.0));
    Ok(worst)
}
