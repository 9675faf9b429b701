//! Command-level operations shared by the CLI and scenario replay: quotes and
//! quote sweeps, liquidity requests, state persistence, and figure data.

pub mod figures;
pub mod scenario;
pub mod state_file;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{CfmmState, LiquidityDirection};
use crate::error::{Error, Result};
use crate::solver::{self, SolveOptions};
use crate::two_asset::{self, ExchangeQuote};

/// Process exit code for an error: 2 rejected action, 3 solver failure,
/// 4 bad input.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RejectedTrade(_)
        | Error::SlippageExceeded { .. }
        | Error::NoValidScale
        | Error::InvalidLiquidityBasket(_)
        | Error::InsufficientShare { .. }
        | Error::NegativeReserves
        | Error::Infeasible(_) => 2,
        Error::NotTight(_) | Error::MaxIterations(_) | Error::Convergence(_) => 3,
        Error::Domain(_)
        | Error::Dimension { .. }
        | Error::InvalidInput(_)
        | Error::UnknownProvider(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 4,
    }
}

/// `lo:hi:steps`, an inclusive grid of `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.steps)
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!("sweep must look like lo:hi:steps, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps < 2 || !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(bad());
        }
        Ok(Self { lo, hi, steps })
    }
}

pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|k| if k + 1 == steps { hi } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 })
            .collect(),
    }
}

/// Shortest round-trip text for a float, in scientific notation when very
/// small or large.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn logspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), steps).into_iter().map(|e| 10f64.powf(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuoteDirection {
    Forward,
    Reverse,
}

/// Resolves an asset by label, or by zero-based index.
pub fn resolve_asset(s: &CfmmState, key: &str) -> Result<usize> {
    if let Some(i) = s.asset_index(key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < s.n() => Ok(i),
        _ => Err(Error::invalid(format!("unknown asset {key:?}"))),
    }
}

pub fn quote(s: &CfmmState, i: usize, j: usize, amount: f64, direction: QuoteDirection) -> Result<ExchangeQuote> {
    match direction {
        QuoteDirection::Forward => two_asset::forward_exchange(s, i, j, amount),
        QuoteDirection::Reverse => two_asset::reverse_exchange(s, i, j, amount),
    }
}

/// One grid point of a quote sweep; `output` is `None` where no trade exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub input: f64,
    pub output: Option<f64>,
}

pub fn quote_sweep(
    s: &CfmmState,
    i: usize,
    j: usize,
    direction: QuoteDirection,
    sweep: &Sweep,
) -> Result<Vec<SweepRow>> {
    sweep
        .points()
        .into_iter()
        .map(|x| match quote(s, i, j, x, direction) {
            Ok(q) => Ok(SweepRow {
                input: x,
                output: Some(match direction {
                    QuoteDirection::Forward => q.output_amount,
                    QuoteDirection::Reverse => q.input_amount,
                }),
            }),
            Err(Error::Infeasible(_)) => Ok(SweepRow { input: x, output: None }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Writes a sweep as `delta,F_delta` or `lambda,G_lambda` with a
/// `feasible` column; infeasible outputs are written as `inf`.
pub fn write_sweep<W: std::io::Write>(out: W, direction: QuoteDirection, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match direction {
        QuoteDirection::Forward => w.write_record(["delta", "F_delta", "feasible"])?,
        QuoteDirection::Reverse => w.write_record(["lambda", "G_lambda", "feasible"])?,
    }
    for r in rows {
        let out = r.output.map_or("inf".to_string(), num);
        w.write_record([num(r.input), out, r.output.is_some().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, direction: QuoteDirection, rows: &[SweepRow]) -> Result<()> {
    write_sweep(std::fs::File::create(path)?, direction, rows)
}

/// How the size of a liquidity change is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiquidityAmount {
    /// An explicit basket.
    Basket(Vec<f64>),
    /// `ν·R`, the price-preserving basket of a homogeneous function.
    Nu(f64),
    /// Value budget `M ≥ 0` at current prices, via the liquidity problem.
    Budget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidityOutcome {
    pub basket: Vec<f64>,
    pub alpha: f64,
    pub weights: Vec<(String, f64)>,
    #[serde(skip)]
    pub state: Option<CfmmState>,
}

pub fn liquidity_basket(s: &CfmmState, amount: &LiquidityAmount, direction: LiquidityDirection) -> Result<Vec<f64>> {
    match amount {
        LiquidityAmount::Basket(b) => Ok(b.clone()),
        LiquidityAmount::Nu(nu) => {
            if !(*nu >= 0.0 && nu.is_finite()) {
                return Err(Error::invalid(format!("nu must be nonnegative, got {nu}")));
            }
            Ok(s.reserves().iter().map(|r| nu * r).collect())
        }
        LiquidityAmount::Budget(m) => {
            if !(*m >= 0.0) {
                return Err(Error::invalid(format!("budget must be nonnegative, got {m}")));
            }
            let signed = match direction {
                LiquidityDirection::Add => *m,
                LiquidityDirection::Remove => -*m,
            };
            let sol = solver::solve_liquidity_problem(s, signed, &SolveOptions::default())?;
            let basket: Vec<f64> = match direction {
                LiquidityDirection::Add => sol.basket,
                LiquidityDirection::Remove => sol.basket.iter().map(|x| -x).collect(),
            };
            if basket.iter().any(|x| *x < -1e-12) {
                return Err(Error::InvalidLiquidityBasket("optimal basket has mixed signs".into()));
            }
            Ok(basket.into_iter().map(|x| x.max(0.0)).collect())
        }
    }
}

pub fn apply_liquidity(
    s: &CfmmState,
    provider: &str,
    amount: &LiquidityAmount,
    direction: LiquidityDirection,
) -> Result<LiquidityOutcome> {
    let basket = liquidity_basket(s, amount, direction)?;
    let check = s.check_liquidity_change(&basket, direction)?;
    let next = s.execute_liquidity_change(provider, &basket, direction)?;
    Ok(LiquidityOutcome {
        basket,
        alpha: check.alpha,
        weights: next.providers().iter().map(|(k, v)| (k.clone(), *v)).collect(),
        state: Some(next),
    })
}

/// Reads return samples, one row per sample, no header.
pub fn load_return_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number {f:?} in {path:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
