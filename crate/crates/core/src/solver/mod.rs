//! Concave maximization over the CFMM feasible set.
//!
//! Both problems are solved the same way: a log-barrier interior point method
//! (damped Newton with Armijo backtracking, geometric barrier schedule) gets
//! close to the optimum, then a Newton iteration on the KKT system of the
//! detected active set polishes the point and recovers exact multipliers.

mod barrier;
mod kkt;
mod liquidity;
mod trade;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use kkt::{kkt_residual, Multipliers};
pub use liquidity::{solve_liquidity_problem, LiquiditySolution};
pub use trade::{no_trade_multiplier, solve_trade_problem, tight_tolerance, zero_trade_report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Linear,
    Quadratic,
    General,
}

/// A concave utility of the trader's net change in holdings `z = Λ − Δ`.
pub trait ConcaveObjective {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> Result<f64>;
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// Analytic Hessian, if the objective has one. Without it the solver
    /// differentiates the gradient numerically.
    fn hessian(&self, _z: &[f64]) -> Option<Result<DMatrix<f64>>> {
        None
    }

    fn curvature(&self) -> Curvature {
        Curvature::General
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub kkt_tol: f64,
    pub barrier_mu0: f64,
    pub barrier_shrink: f64,
    pub max_outer: usize,
    pub max_inner_newton: usize,
    pub armijo_slope: f64,
    pub backtrack: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            barrier_mu0: 1.0,
            barrier_shrink: 0.2,
            max_outer: 60,
            max_inner_newton: 50,
            armijo_slope: 0.25,
            backtrack: 0.5,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.kkt_tol, self.barrier_mu0, self.armijo_slope, self.backtrack]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if !positive
            || self.max_outer == 0
            || self.max_inner_newton == 0
            || !(self.barrier_shrink > 0.0 && self.barrier_shrink < 1.0)
            || !(self.backtrack < 1.0 && self.armijo_slope < 0.5)
        {
            return Err(crate::error::Error::invalid(format!("invalid solver options: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NotTight,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Trade problem: `φ(R+γΔ−Λ) − φ(R)`. Liquidity problem: unused budget.
    pub constraint_slack: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Objective (utility or `φ`) at the end of each barrier stage.
    pub objective_history: Vec<f64>,
    pub multipliers: Option<Multipliers>,
}
