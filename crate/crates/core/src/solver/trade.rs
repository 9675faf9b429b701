//! The trade-choice problem
//!
//! ```text
//! maximize    U(Λ − Δ)
//! subject to  φ(R + γΔ − Λ) ≥ φ(R),  Δ ≥ 0,  Λ ≥ 0
//! ```
//!
//! over `x = (Δ, Λ)`. The reserve bound `R + γΔ − Λ ≥ 0` is carried as an
//! explicit constraint so that functions defined on the boundary (sum,
//! linear) cannot be driven past it.

use nalgebra::{DMatrix, DVector};

use super::barrier::{self, BarrierResult, ConstraintDerivs, SmoothProblem};
use super::kkt::{kkt_residual, Multipliers};
use super::{ConcaveObjective, Curvature, SolveOptions, SolveReport, SolveStatus};
use crate::engine::{acceptance_tolerance, canonicalize_trade, CfmmState, Trade};
use crate::error::{check_dim, Error, Result};
use crate::roots;
use crate::trading_functions::TradingFunction;

/// Largest slack `φ(R+γΔ−Λ) − φ(R)` still reported as a tight constraint.
pub fn tight_tolerance(phi_before: f64) -> f64 {
    1e-7 * (1.0 + phi_before.abs())
}

/// Smallest `ν ≥ 0` with `γνP ≤ g ≤ νP` componentwise, if any exists. Such a
/// `ν` certifies that the zero trade is optimal for a concave utility with
/// gradient `g` at the origin.
pub fn no_trade_multiplier(g: &[f64], unscaled_prices: &[f64], gamma: f64) -> Option<f64> {
    let lo = g
        .iter()
        .zip(unscaled_prices)
        .map(|(g, p)| g / p)
        .fold(0.0_f64, f64::max);
    let hi = g
        .iter()
        .zip(unscaled_prices)
        .map(|(g, p)| g / (gamma * p))
        .fold(f64::INFINITY, f64::min);
    (lo <= hi).then_some(lo)
}

/// Report for the zero trade with the multipliers that certify it. At a
/// boundary of the no-trade cone, where rounding can leave the multiplier
/// interval empty by a few ulps, the midpoint is used.
pub fn zero_trade_report(s: &CfmmState, u: &dyn ConcaveObjective) -> Result<SolveReport> {
    let n = s.n();
    let zero = vec![0.0; n];
    let g = u.gradient(&zero)?;
    let p0 = s.unscaled_prices()?;
    let gamma = s.gamma();
    let nu = no_trade_multiplier(&g, &p0, gamma).unwrap_or_else(|| {
        let lo = g.iter().zip(&p0).map(|(g, p)| g / p).fold(0.0_f64, f64::max);
        let hi = g.iter().zip(&p0).map(|(g, p)| g / (gamma * p)).fold(f64::INFINITY, f64::min);
        0.5 * (lo + hi)
    });
    let multipliers = Multipliers {
        lambda: nu,
        omega: (0..n).map(|i| (g[i] - nu * gamma * p0[i]).max(0.0)).collect(),
        kappa: (0..n).map(|i| (nu * p0[i] - g[i]).max(0.0)).collect(),
        rho: vec![0.0; n],
    };
    let kkt = kkt_residual(s, &Trade::zero(n), u, &multipliers)?;
    Ok(SolveReport {
        status: SolveStatus::Optimal,
        kkt_residual: kkt,
        constraint_slack: 0.0,
        outer_iterations: 0,
        newton_steps: 0,
        objective_history: vec![u.value(&zero)?],
        multipliers: Some(multipliers),
    })
}

struct TradeProblem<'a> {
    state: &'a CfmmState,
    utility: &'a dyn ConcaveObjective,
    phi0: f64,
}

impl TradeProblem<'_> {
    fn n(&self) -> usize {
        self.state.n()
    }

    fn net(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| x[n + i] - x[i]).collect()
    }

    fn after(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.n();
        let r = self.state.reserves();
        (0..n).map(|i| r[i] + self.state.gamma() * x[i] - x[n + i]).collect()
    }

    fn utility_hessian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        if self.utility.curvature() == Curvature::Linear {
            return Ok(DMatrix::zeros(n, n));
        }
        match self.utility.hessian(z) {
            Some(h) => h,
            None => barrier::fd_concave_hessian(|z| self.utility.gradient(z), z),
        }
    }
}

/// `[a·M, b·M; b·M, c·M]`
fn blocks(m: &DMatrix<f64>, a: f64, b: f64, c: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&(m * a));
    out.view_mut((0, n), (n, n)).copy_from(&(m * b));
    out.view_mut((n, 0), (n, n)).copy_from(&(m * b));
    out.view_mut((n, n), (n, n)).copy_from(&(m * c));
    out
}

fn unit(len: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(len);
    e[k] = 1.0;
    e
}

impl SmoothProblem for TradeProblem<'_> {
    fn dim(&self) -> usize {
        2 * self.n()
    }

    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(-self.utility.value(&self.net(x))?)
    }

    fn objective_derivs(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        let z = self.net(x);
        let g = self.utility.gradient(&z)?;
        let mut grad = DVector::zeros(2 * n);
        for i in 0..n {
            grad[i] = g[i];
            grad[n + i] = -g[i];
        }
        let h = self.utility_hessian(&z)?;
        Ok((grad, blocks(&h, -1.0, 1.0, -1.0)))
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let after = self.after(x);
        let clamped: Vec<f64> = after.iter().map(|v| v.max(0.0)).collect();
        let c0 = self.state.phi().value(&clamped).ok()? - self.phi0;
        let mut out = Vec::with_capacity(1 + 3 * self.n());
        out.push(c0);
        out.extend(x.iter());
        out.extend(after);
        Some(out)
    }

    fn constraint_derivs(&self, x: &DVector<f64>) -> Result<Vec<ConstraintDerivs>> {
        let n = self.n();
        let gamma = self.state.gamma();
        let after = self.after(x);
        let clamped: Vec<f64> = after.iter().map(|v| v.max(0.0)).collect();
        let phi = self.state.phi();
        let p = phi.gradient(&clamped)?;
        let mut grad = DVector::zeros(2 * n);
        for i in 0..n {
            grad[i] = gamma * p[i];
            grad[n + i] = -p[i];
        }
        let hess = if phi.has_constant_gradient() {
            None
        } else {
            Some(blocks(&phi.hessian(&clamped)?, gamma * gamma, -gamma, 1.0))
        };
        let mut out = Vec::with_capacity(1 + 3 * n);
        out.push(ConstraintDerivs { value: phi.value(&clamped)? - self.phi0, grad, hess });
        for k in 0..2 * n {
            out.push(ConstraintDerivs { value: x[k], grad: unit(2 * n, k), hess: None });
        }
        for (i, a) in after.iter().enumerate() {
            let mut g = DVector::zeros(2 * n);
            g[i] = gamma;
            g[n + i] = -1.0;
            out.push(ConstraintDerivs { value: *a, grad: g, hess: None });
        }
        Ok(out)
    }

    fn linear_weight(&self) -> Option<DVector<f64>> {
        let r = self.state.reserves();
        let n = self.n();
        Some(DVector::from_fn(2 * n, |k, _| 1.0 / r[k % n]))
    }
}

fn to_trade(x: &DVector<f64>, n: usize) -> Trade {
    Trade {
        delta: (0..n).map(|i| x[i].max(0.0)).collect(),
        lambda: (0..n).map(|i| x[n + i].max(0.0)).collect(),
    }
}

fn multipliers_from(duals: &[f64], n: usize) -> Multipliers {
    Multipliers {
        lambda: duals[0],
        omega: duals[1..1 + n].to_vec(),
        kappa: duals[1 + n..1 + 2 * n].to_vec(),
        rho: duals[1 + 2 * n..1 + 3 * n].to_vec(),
    }
}

struct Candidate {
    trade: Trade,
    multipliers: Multipliers,
    kkt: f64,
    slack: f64,
}

fn evaluate(s: &CfmmState, u: &dyn ConcaveObjective, x: &DVector<f64>, duals: &[f64]) -> Result<Candidate> {
    let n = s.n();
    let trade = canonicalize_trade(&to_trade(x, n), s.gamma());
    let multipliers = multipliers_from(duals, n);
    let kkt = kkt_residual(s, &trade, u, &multipliers)?;
    let slack = s.check_trade(&trade)?.surplus;
    Ok(Candidate { trade, multipliers, kkt, slack })
}

fn exact_point(x: DVector<f64>, duals: Vec<f64>) -> BarrierResult {
    BarrierResult { x, mu: 0.0, duals, outer_iterations: 0, newton_steps: 0, history: Vec::new() }
}

/// Scale on the tender basket that brings the constraint back to equality.
fn tighten(s: &CfmmState, t: &Trade) -> Result<Trade> {
    let phi0 = s.phi_value()?;
    let n = s.n();
    let slack_at = |scale: f64| {
        let after: Vec<f64> = (0..n)
            .map(|i| (s.reserves()[i] + s.gamma() * scale * t.delta[i] - t.lambda[i]).max(0.0))
            .collect();
        s.phi().value(&after).map_or(f64::NEG_INFINITY, |v| v - phi0)
    };
    let root = roots::bisect(slack_at, 0.0, 1.0, 200)?;
    let mut scale = root.x;
    // step right until the trade is acceptable
    while slack_at(scale) < 0.0 && scale < 1.0 {
        scale = (scale + f64::EPSILON).min(1.0);
    }
    Ok(Trade { delta: t.delta.iter().map(|d| d * scale).collect(), lambda: t.lambda.clone() })
}

/// Maximizes `U(Λ − Δ)` over valid trades.
///
/// Errors with `NotTight` when the trading constraint is slack at the optimum
/// and the utility does not reward removing the slack, and with
/// `MaxIterations` when the KKT residual cannot be brought below `kkt_tol`.
/// Both carry the best trade found and its report.
pub fn solve_trade_problem(
    s: &CfmmState,
    u: &dyn ConcaveObjective,
    opts: &SolveOptions,
) -> Result<(Trade, SolveReport)> {
    opts.validate()?;
    let n = s.n();
    check_dim(n, u.dim())?;
    let phi0 = s.phi_value()?;
    let p0 = s.unscaled_prices()?;
    let gamma = s.gamma();
    let tight_tol = tight_tolerance(phi0);

    if let Ok(g) = u.gradient(&vec![0.0; n]) {
        if no_trade_multiplier(&g, &p0, gamma).is_some() {
            return Ok((Trade::zero(n), zero_trade_report(s, u)?));
        }
    }

    let problem = TradeProblem { state: s, utility: u, phi0 };
    let eps = 1e-3 * s.reserves().iter().cloned().fold(f64::INFINITY, f64::min);
    let x0 = DVector::from_fn(2 * n, |k, _| if k < n { eps } else { 0.5 * gamma * eps });
    let bar = barrier::minimize(&problem, x0, opts)?;

    let mut best = evaluate(s, u, &bar.x, &bar.duals)?;
    let mut polish_steps = 0;
    if let Some(pol) = barrier::polish(&problem, &bar, &[]) {
        polish_steps = pol.iterations;
        let cand = evaluate(s, u, &pol.x, &pol.duals)?;
        if cand.slack >= -acceptance_tolerance(phi0) && cand.kkt <= best.kkt {
            best = cand;
        }
    }

    if best.kkt > opts.kkt_tol {
        // retry from the canonical form, whose zero entries give a clean
        // starting active set when the barrier point is degenerate
        let mut x = DVector::zeros(2 * n);
        for i in 0..n {
            x[i] = best.trade.delta[i];
            x[n + i] = best.trade.lambda[i];
        }
        if let Some(pol) = barrier::polish(&problem, &exact_point(x, vec![0.0; 1 + 3 * n]), &[]) {
            polish_steps += pol.iterations;
            let cand = evaluate(s, u, &pol.x, &pol.duals)?;
            if cand.slack >= -acceptance_tolerance(phi0) && cand.kkt < best.kkt {
                best = cand;
            }
        }
    }

    let grad = u.gradient(&best.trade.net())?;
    if best.slack > tight_tol {
        let rewards_tightening = best
            .trade
            .delta
            .iter()
            .zip(&grad)
            .all(|(d, g)| *d == 0.0 || *g > 0.0);
        if rewards_tightening && best.trade.delta.iter().any(|d| *d > 0.0) {
            let tightened = tighten(s, &best.trade)?;
            let mut x = DVector::zeros(2 * n);
            for i in 0..n {
                x[i] = tightened.delta[i];
                x[n + i] = tightened.lambda[i];
            }
            let mut duals = vec![0.0; 1 + 3 * n];
            duals[0] = best.multipliers.lambda;
            let start = exact_point(x.clone(), duals.clone());
            let cand = match barrier::polish(&problem, &start, &[0]) {
                Some(pol) => evaluate(s, u, &pol.x, &pol.duals)?,
                None => evaluate(s, u, &x, &duals)?,
            };
            if cand.slack >= -acceptance_tolerance(phi0) {
                best = cand;
            }
        }
    }

    let status = if best.slack > tight_tol {
        SolveStatus::NotTight
    } else if best.kkt > opts.kkt_tol {
        SolveStatus::MaxIterations
    } else {
        SolveStatus::Optimal
    };
    let report = SolveReport {
        status,
        kkt_residual: best.kkt,
        constraint_slack: best.slack,
        outer_iterations: bar.outer_iterations,
        newton_steps: bar.newton_steps + polish_steps,
        objective_history: bar.history.iter().map(|v| -v).collect(),
        multipliers: Some(best.multipliers),
    };
    match status {
        SolveStatus::Optimal => Ok((best.trade, report)),
        SolveStatus::NotTight => Err(Error::NotTight(Box::new((best.trade, report)))),
        _ => Err(Error::MaxIterations(Box::new((best.trade, report)))),
    }
}
