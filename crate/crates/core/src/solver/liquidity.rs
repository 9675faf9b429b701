//! The liquidity problem
//!
//! ```text
//! maximize    φ(R⁺)
//! subject to  pᵀ(R⁺ − R) ≤ M,  R⁺ ≥ 0
//! ```
//!
//! at the current prices `p`. Its solution changes reserves without moving
//! prices: `∇φ(R⁺) = α∇φ(R)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::barrier::{self, ConstraintDerivs, SmoothProblem};
use super::{SolveOptions, SolveReport, SolveStatus};
use crate::engine::{gradient_scale, CfmmState};
use crate::error::{Error, Result};
use crate::trading_functions::{TradingFunction, TradingFunctionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquiditySolution {
    /// `Ψ = R⁺ − R`
    pub basket: Vec<f64>,
    pub reserves_after: Vec<f64>,
    /// Gradient scale `∇φ(R⁺)_i / ∇φ(R)_i` (mean over assets).
    pub alpha: f64,
    /// Relative spread of those ratios.
    pub spread: f64,
    pub report: SolveReport,
}

struct LiquidityProblem<'a> {
    phi: &'a TradingFunctionSpec,
    prices: DVector<f64>,
    budget: f64,
}

impl SmoothProblem for LiquidityProblem<'_> {
    fn dim(&self) -> usize {
        self.prices.len()
    }

    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(-self.phi.value(x.as_slice())?)
    }

    fn objective_derivs(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let g = DVector::from_vec(self.phi.gradient(x.as_slice())?);
        Ok((-g, -self.phi.hessian(x.as_slice())?))
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let mut out = vec![self.budget - self.prices.dot(x)];
        out.extend(x.iter());
        Some(out)
    }

    fn constraint_derivs(&self, x: &DVector<f64>) -> Result<Vec<ConstraintDerivs>> {
        let n = self.dim();
        let mut out = vec![ConstraintDerivs { value: self.budget - self.prices.dot(x), grad: -&self.prices, hess: None }];
        for k in 0..n {
            let mut g = DVector::zeros(n);
            g[k] = 1.0;
            out.push(ConstraintDerivs { value: x[k], grad: g, hess: None });
        }
        Ok(out)
    }
}

fn flat(phi: &TradingFunctionSpec) -> bool {
    phi.has_constant_gradient() || matches!(phi, TradingFunctionSpec::HybridSumGeoMean { alpha, .. } if *alpha == 0.0)
}

/// Reserves maximizing `φ` within value budget `M` at the current prices.
///
/// Functions with constant gradients are indifferent between baskets of equal
/// value; for them the proportional basket `(M / pᵀR)·R` is returned.
pub fn solve_liquidity_problem(s: &CfmmState, m: f64, opts: &SolveOptions) -> Result<LiquiditySolution> {
    opts.validate()?;
    if !m.is_finite() {
        return Err(Error::invalid("budget must be finite"));
    }
    let r = s.reserves().to_vec();
    let n = r.len();
    let p = s.prices()?;
    let value: f64 = p.iter().zip(&r).map(|(a, b)| a * b).sum();
    let budget = value + m;
    if !(budget > 0.0) {
        return Err(Error::Infeasible(format!("budget {m} would remove more than the pool value {value}")));
    }
    let phi = s.phi();
    let finish = |after: Vec<f64>, report: SolveReport| -> Result<LiquiditySolution> {
        let check = gradient_scale(phi, &r, &after)?;
        Ok(LiquiditySolution {
            basket: after.iter().zip(&r).map(|(a, b)| a - b).collect(),
            reserves_after: after,
            alpha: check.alpha,
            spread: check.spread,
            report,
        })
    };
    let exact = |after: Vec<f64>| -> Result<LiquiditySolution> {
        let phi_after = phi.value(&after)?;
        let report = SolveReport {
            status: SolveStatus::Optimal,
            kkt_residual: 0.0,
            constraint_slack: 0.0,
            outer_iterations: 0,
            newton_steps: 0,
            objective_history: vec![phi_after],
            multipliers: None,
        };
        finish(after, report)
    };
    if m == 0.0 {
        return exact(r.clone());
    }
    if flat(phi) {
        let scale = budget / value;
        return exact(r.iter().map(|x| x * scale).collect());
    }

    let problem = LiquidityProblem { phi, prices: DVector::from_vec(p.clone()), budget };
    let x0 = DVector::from_iterator(n, r.iter().map(|x| 0.9 * x * budget / value));
    let bar = barrier::minimize(&problem, x0, opts)?;
    let (x, duals, polish_steps) = match barrier::polish(&problem, &bar, &[0]) {
        Some(pol) => (pol.x, pol.duals, pol.iterations),
        None => (bar.x.clone(), bar.duals.clone(), 0),
    };
    let after: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let nu = duals[0];
    // stationarity ∇φ(x) − νp + σ = 0 and complementarity, in the ∞-norm
    let grad = phi.gradient(&after)?;
    let slack = budget - p.iter().zip(&after).map(|(a, b)| a * b).sum::<f64>();
    let mut kkt = (nu * slack).abs().max((-nu).max(0.0));
    for i in 0..n {
        kkt = kkt.max((grad[i] - nu * p[i] + duals[1 + i]).abs());
        kkt = kkt.max((duals[1 + i] * after[i]).abs());
    }
    let status = if kkt <= opts.kkt_tol * (1.0 + grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };
    let report = SolveReport {
        status,
        kkt_residual: kkt,
        constraint_slack: slack,
        outer_iterations: bar.outer_iterations,
        newton_steps: bar.newton_steps + polish_steps,
        objective_history: bar.history.iter().map(|v| -v).collect(),
        multipliers: None,
    };
    if status != SolveStatus::Optimal {
        return Err(Error::Convergence(format!("liquidity problem: KKT residual {kkt:.3e}")));
    }
    finish(after, report)
}
