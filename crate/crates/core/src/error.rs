use thiserror::Error;

use crate::engine::{AcceptanceReport, Trade};
use crate::solver::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("trade rejected ({})", .0.reason)]
    RejectedTrade(Box<AcceptanceReport>),

    #[error("slippage exceeded: executable scale {alpha} is below the threshold {eta}")]
    SlippageExceeded { alpha: f64, eta: f64 },

    #[error("no scale of the received basket yields a valid trade")]
    NoValidScale,

    #[error("invalid liquidity basket: {0}")]
    InvalidLiquidityBasket(String),

    #[error("provider {provider} holds weight {weight} but the removal needs {required}")]
    InsufficientShare {
        provider: String,
        weight: f64,
        required: f64,
    },

    #[error("removal basket exceeds the reserves")]
    NegativeReserves,

    #[error("unknown liquidity provider {0:?}")]
    UnknownProvider(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("root finding failed: {0}")]
    Convergence(String),

    #[error("trading constraint is not tight at the solution (slack {})", .0.1.constraint_slack)]
    NotTight(Box<(Trade, SolveReport)>),

    #[error("solver hit the iteration limit (kkt residual {})", .0.1.kkt_residual)]
    MaxIterations(Box<(Trade, SolveReport)>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
