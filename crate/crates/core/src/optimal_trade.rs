//! Trader utilities and the optimal-trade entry point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{CfmmState, Trade};
use crate::error::{check_dim, Error, Result};
use crate::solver::{self, ConcaveObjective, Curvature, SolveOptions, SolveReport};

/// Concave increasing scalar utility of wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarUtility {
    /// `ln w`
    Log,
    /// `w^a / a`, `a < 1`, `a ≠ 0`
    Power { a: f64 },
    /// `−exp(−a w)`, `a > 0`
    NegExp { a: f64 },
}

impl ScalarUtility {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Log => Ok(()),
            Self::Power { a } if a < 1.0 && a != 0.0 && a.is_finite() => Ok(()),
            Self::NegExp { a } if a > 0.0 && a.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("invalid scalar utility {other:?}"))),
        }
    }

    /// Value and first two derivatives at wealth `w`.
    pub fn eval(&self, w: f64) -> Result<(f64, f64, f64)> {
        match *self {
            Self::Log | Self::Power { .. } if !(w > 0.0) => {
                Err(Error::domain(format!("utility needs positive wealth, got {w}")))
            }
            Self::Log => Ok((w.ln(), 1.0 / w, -1.0 / (w * w))),
            Self::Power { a } => {
                let wa = w.powf(a);
                Ok((wa / a, wa / w, (a - 1.0) * wa / (w * w)))
            }
            Self::NegExp { a } => {
                let e = (-a * w).exp();
                Ok((-e, a * e, -a * a * e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `πᵀz`
    Linear { pi: Vec<f64> },
    /// `μᵀw − κ wᵀΣw` with `w = z_curr + z`
    Markowitz {
        z_curr: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        kappa: f64,
    },
    /// Sample mean of `ψ(rᵀw)` with `w = z_curr + z`
    ExpectedUtility {
        z_curr: Vec<f64>,
        return_samples: Vec<Vec<f64>>,
        psi: ScalarUtility,
    },
}

impl UtilitySpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { pi } => pi.len(),
            Self::Markowitz { z_curr, .. } | Self::ExpectedUtility { z_curr, .. } => z_curr.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        match self {
            Self::Linear { pi } => {
                if pi.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::invalid("private prices must be positive"));
                }
            }
            Self::Markowitz { mu, sigma, kappa, .. } => {
                check_dim(n, mu.len())?;
                check_dim(n, sigma.len())?;
                for row in sigma {
                    check_dim(n, row.len())?;
                }
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    return Err(Error::invalid(format!("risk aversion must be positive, got {kappa}")));
                }
                let m = DMatrix::from_fn(n, n, |i, j| sigma[i][j]);
                let scale = m.amax().max(1.0);
                if (&m - m.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
                if m.symmetric_eigenvalues().min() < -1e-10 {
                    return Err(Error::invalid("covariance must be positive semidefinite"));
                }
            }
            Self::ExpectedUtility { return_samples, psi, .. } => {
                if return_samples.is_empty() {
                    return Err(Error::invalid("expected utility needs at least one return sample"));
                }
                for r in return_samples {
                    check_dim(n, r.len())?;
                }
                psi.validate()?;
            }
        }
        Ok(())
    }
}

/// Value, gradient and Hessian oracles for a validated [`UtilitySpec`].
#[derive(Debug, Clone)]
pub struct UtilityOracle {
    spec: UtilitySpec,
    sigma: DMatrix<f64>,
    samples: Vec<DVector<f64>>,
}

pub fn utility_oracle(u: &UtilitySpec) -> Result<UtilityOracle> {
    u.validate()?;
    let n = u.dim();
    let sigma = match u {
        UtilitySpec::Markowitz { sigma, .. } => DMatrix::from_fn(n, n, |i, j| sigma[i][j]),
        _ => DMatrix::zeros(0, 0),
    };
    let samples = match u {
        UtilitySpec::ExpectedUtility { return_samples, .. } => {
            return_samples.iter().map(|r| DVector::from_column_slice(r)).collect()
        }
        _ => Vec::new(),
    };
    Ok(UtilityOracle { spec: u.clone(), sigma, samples })
}

fn holdings(z_curr: &[f64], z: &[f64]) -> DVector<f64> {
    DVector::from_iterator(z.len(), z_curr.iter().zip(z).map(|(a, b)| a + b))
}

impl UtilityOracle {
    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }
}

impl ConcaveObjective for UtilityOracle {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn value(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        match &self.spec {
            UtilitySpec::Linear { pi } => Ok(pi.iter().zip(z).map(|(a, b)| a * b).sum()),
            UtilitySpec::Markowitz { z_curr, mu, kappa, .. } => {
                let w = holdings(z_curr, z);
                Ok(DVector::from_column_slice(mu).dot(&w) - kappa * w.dot(&(&self.sigma * &w)))
            }
            UtilitySpec::ExpectedUtility { z_curr, psi, .. } => {
                let w = holdings(z_curr, z);
                let mut total = 0.0;
                for r in &self.samples {
                    total += psi.eval(r.dot(&w))?.0;
                }
                Ok(total / self.samples.len() as f64)
            }
        }
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        match &self.spec {
            UtilitySpec::Linear { pi } => Ok(pi.clone()),
            UtilitySpec::Markowitz { z_curr, mu, kappa, .. } => {
                let w = holdings(z_curr, z);
                let g = DVector::from_column_slice(mu) - (&self.sigma * &w) * (2.0 * kappa);
                Ok(g.as_slice().to_vec())
            }
            UtilitySpec::ExpectedUtility { z_curr, psi, .. } => {
                let w = holdings(z_curr, z);
                let mut g = DVector::zeros(z.len());
                for r in &self.samples {
                    g += r * psi.eval(r.dot(&w))?.1;
                }
                Ok((g / self.samples.len() as f64).as_slice().to_vec())
            }
        }
    }

    fn hessian(&self, z: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let n = self.dim();
        Some(match &self.spec {
            UtilitySpec::Linear { .. } => Ok(DMatrix::zeros(n, n)),
            UtilitySpec::Markowitz { kappa, .. } => Ok(&self.sigma * (-2.0 * kappa)),
            UtilitySpec::ExpectedUtility { z_curr, psi, .. } => (|| {
                check_dim(n, z.len())?;
                let w = holdings(z_curr, z);
                let mut h = DMatrix::zeros(n, n);
                for r in &self.samples {
                    h += (r * r.transpose()) * psi.eval(r.dot(&w))?.2;
                }
                Ok(h / self.samples.len() as f64)
            })(),
        })
    }

    fn curvature(&self) -> Curvature {
        match self.spec {
            UtilitySpec::Linear { .. } => Curvature::Linear,
            UtilitySpec::Markowitz { .. } => Curvature::Quadratic,
            UtilitySpec::ExpectedUtility { .. } => Curvature::General,
        }
    }
}

/// Whether some `α > 0` satisfies `γp ≤ α g ≤ p`, i.e. whether the zero trade
/// is optimal for a trader with marginal utility `g` at prices `p`.
pub fn no_trade_check(p: &[f64], g: &[f64], gamma: f64) -> Result<bool> {
    check_dim(p.len(), g.len())?;
    if p.iter().chain(g).any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::domain("prices and marginal utilities must be positive"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("fee parameter must lie in (0, 1], got {gamma}")));
    }
    let lo = p.iter().zip(g).map(|(p, g)| gamma * p / g).fold(0.0_f64, f64::max);
    let hi = p.iter().zip(g).map(|(p, g)| p / g).fold(f64::INFINITY, f64::min);
    Ok(lo <= hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeSolution {
    pub trade: Trade,
    /// `U(Λ − Δ) − U(0)`
    pub utility_gain: f64,
    pub report: SolveReport,
    pub post_prices: Vec<f64>,
}

/// Utility-maximizing valid trade against `s`.
pub fn optimal_trade(s: &CfmmState, u: &UtilitySpec, opts: &SolveOptions) -> Result<TradeSolution> {
    let oracle = utility_oracle(u)?;
    let n = s.n();
    check_dim(n, oracle.dim())?;
    let zero = vec![0.0; n];
    let u0 = oracle.value(&zero)?;
    let g0 = oracle.gradient(&zero)?;
    let p = s.prices()?;
    if g0.iter().all(|g| *g > 0.0) && no_trade_check(&p, &g0, s.gamma())? {
        return Ok(TradeSolution {
            trade: Trade::zero(n),
            utility_gain: 0.0,
            report: solver::zero_trade_report(s, &oracle)?,
            post_prices: p,
        });
    }
    let (trade, report) = solver::solve_trade_problem(s, &oracle, opts)?;
    let utility_gain = if trade.is_zero() { 0.0 } else { oracle.value(&trade.net())? - u0 };
    let post_prices = s.execute_trade(&trade)?.prices()?;
    Ok(TradeSolution { trade, utility_gain, report, post_prices })
}
