//! Constant function market makers: trading functions, pool state, exchange
//! functions, and optimal trade selection by convex optimization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod harness;
pub mod optimal_trade;
pub mod roots;
pub mod solver;
pub mod trading_functions;
pub mod two_asset;

pub use engine::{canonicalize_trade, AcceptanceReport, CfmmState, LiquidityDirection, Trade};
pub use error::{Error, Result};
pub use optimal_trade::{no_trade_check, optimal_trade, utility_oracle, ScalarUtility, TradeSolution, UtilitySpec};
pub use solver::{ConcaveObjective, SolveOptions, SolveReport, SolveStatus};
pub use trading_functions::{TradingFunction, TradingFunctionSpec};
