//! Scenario replay: an initial state followed by an ordered list of actions.
//!
//! Replay is deterministic. Randomized actions draw from a ChaCha stream
//! seeded by the config, and outputs contain no timestamps.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::state_file::{load_state, save_state, StateFile};
use super::{apply_liquidity, quote, quote_sweep, resolve_asset, write_sweep_csv, LiquidityAmount, QuoteDirection, Sweep, SweepRow};
use crate::engine::{CfmmState, LiquidityDirection, Trade};
use crate::error::{Error, Result};
use crate::optimal_trade::{optimal_trade, UtilitySpec};
use crate::solver::SolveOptions;
use crate::two_asset::forward_exchange;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSource {
    Path(PathBuf),
    Inline(StateFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub state: StateSource,
    #[serde(default)]
    pub seed: u64,
    pub actions: Vec<Action>,
}

/// Exactly one of `basket`, `nu`, `budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidityArgs {
    pub provider: String,
    #[serde(default)]
    pub basket: Option<Vec<f64>>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub budget: Option<f64>,
}

impl LiquidityArgs {
    pub fn amount(&self) -> Result<LiquidityAmount> {
        match (&self.basket, self.nu, self.budget) {
            (Some(b), None, None) => Ok(LiquidityAmount::Basket(b.clone())),
            (None, Some(nu), None) => Ok(LiquidityAmount::Nu(nu)),
            (None, None, Some(m)) => Ok(LiquidityAmount::Budget(m)),
            _ => Err(Error::invalid("give exactly one of basket, nu, budget")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Trade {
        delta: Vec<f64>,
        lambda: Vec<f64>,
    },
    TradeWithSlippage {
        delta: Vec<f64>,
        lambda: Vec<f64>,
        eta: f64,
    },
    QuoteForward {
        from: String,
        to: String,
        amount: f64,
    },
    QuoteReverse {
        from: String,
        to: String,
        amount: f64,
    },
    AddLiquidity(LiquidityArgs),
    RemoveLiquidity(LiquidityArgs),
    OptimalTrade {
        utility: UtilitySpec,
        #[serde(default = "yes")]
        commit: bool,
        #[serde(default)]
        options: SolveOptions,
    },
    /// Quote sweep written to `<name>.csv`.
    Sweep {
        name: String,
        from: String,
        to: String,
        direction: QuoteDirection,
        grid: String,
    },
    /// `count` forward swaps between random pairs, each tendering a random
    /// fraction (at most `max_fraction`) of the tendered asset's reserve.
    RandomSwaps {
        count: usize,
        max_fraction: f64,
    },
}

fn yes() -> bool {
    true
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Trade { .. } => "trade",
            Action::TradeWithSlippage { .. } => "trade_with_slippage",
            Action::QuoteForward { .. } => "quote_forward",
            Action::QuoteReverse { .. } => "quote_reverse",
            Action::AddLiquidity(_) => "add_liquidity",
            Action::RemoveLiquidity(_) => "remove_liquidity",
            Action::OptimalTrade { .. } => "optimal_trade",
            Action::Sweep { .. } => "sweep",
            Action::RandomSwaps { .. } => "random_swaps",
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Loads the initial state; relative paths resolve against `base`.
    pub fn initial_state(&self, base: &Path) -> Result<CfmmState> {
        match &self.state {
            StateSource::Path(p) if p.is_relative() => load_state(&base.join(p)),
            StateSource::Path(p) => load_state(p),
            StateSource::Inline(f) => f.to_state(),
        }
    }

    /// Checks that actions name only declared assets, and only providers that
    /// exist or were added by an earlier action.
    pub fn validate(&self, s: &CfmmState) -> Result<()> {
        let mut providers: BTreeSet<String> = s.providers().keys().cloned().collect();
        for (k, a) in self.actions.iter().enumerate() {
            let ctx = |e: Error| Error::invalid(format!("action {k} ({}): {e}", a.name()));
            match a {
                Action::QuoteForward { from, to, .. }
                | Action::QuoteReverse { from, to, .. }
                | Action::Sweep { from, to, .. } => {
                    resolve_asset(s, from).map_err(ctx)?;
                    resolve_asset(s, to).map_err(ctx)?;
                }
                Action::AddLiquidity(l) => {
                    l.amount().map_err(ctx)?;
                    providers.insert(l.provider.clone());
                }
                Action::RemoveLiquidity(l) => {
                    l.amount().map_err(ctx)?;
                    if !providers.contains(&l.provider) {
                        return Err(ctx(Error::UnknownProvider(l.provider.clone())));
                    }
                }
                Action::RandomSwaps { max_fraction, .. } if !(*max_fraction > 0.0 && *max_fraction < 1.0) => {
                    return Err(ctx(Error::invalid("max_fraction must lie in (0, 1)")));
                }
                _ => {}
            }
            if let Action::Sweep { grid, .. } = a {
                grid.parse::<Sweep>().map_err(ctx)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub action: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub result: Value,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub final_state: CfmmState,
    pub log: Vec<StepRecord>,
    pub sweeps: Vec<(String, QuoteDirection, Vec<SweepRow>)>,
}

/// Replays `config` from `initial`. Actions the pool rejects are logged and
/// leave the state unchanged; malformed actions abort the run.
pub fn run_scenario(config: &ScenarioConfig, initial: CfmmState) -> Result<ScenarioOutcome> {
    config.validate(&initial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initial;
    let mut log = Vec::with_capacity(config.actions.len());
    let mut sweeps = Vec::new();
    for (index, action) in config.actions.iter().enumerate() {
        let step = run_action(&state, action, &mut rng, &mut sweeps);
        let record = match step {
            Ok((next, result)) => {
                if let Some(next) = next {
                    next.validate()?;
                    state = next;
                }
                StepRecord { index, action: action.name().into(), ok: true, error: None, result }
            }
            Err(e) if super::exit_code(&e) != 4 => StepRecord {
                index,
                action: action.name().into(),
                ok: false,
                error: Some(e.to_string()),
                result: Value::Null,
            },
            Err(e) => return Err(Error::invalid(format!("action {index} ({}): {e}", action.name()))),
        };
        log.push(record);
    }
    Ok(ScenarioOutcome { final_state: state, log, sweeps })
}

type Step = (Option<CfmmState>, Value);

fn run_action(
    s: &CfmmState,
    action: &Action,
    rng: &mut ChaCha8Rng,
    sweeps: &mut Vec<(String, QuoteDirection, Vec<SweepRow>)>,
) -> Result<Step> {
    match action {
        Action::Trade { delta, lambda } => {
            let t = Trade::new(delta.clone(), lambda.clone())?;
            let next = s.execute_trade(&t)?;
            Ok((Some(next), json!({ "delta": delta, "lambda": lambda })))
        }
        Action::TradeWithSlippage { delta, lambda, eta } => {
            let t = Trade::new(delta.clone(), lambda.clone())?;
            let (next, alpha) = s.execute_trade_with_slippage(&t, *eta)?;
            Ok((Some(next), json!({ "alpha": alpha })))
        }
        Action::QuoteForward { from, to, amount } | Action::QuoteReverse { from, to, amount } => {
            let direction = match action {
                Action::QuoteForward { .. } => QuoteDirection::Forward,
                _ => QuoteDirection::Reverse,
            };
            let q = quote(s, resolve_asset(s, from)?, resolve_asset(s, to)?, *amount, direction)?;
            Ok((None, serde_json::to_value(q)?))
        }
        Action::AddLiquidity(l) | Action::RemoveLiquidity(l) => {
            let direction = match action {
                Action::AddLiquidity(_) => LiquidityDirection::Add,
                _ => LiquidityDirection::Remove,
            };
            let mut out = apply_liquidity(s, &l.provider, &l.amount()?, direction)?;
            let next = out.state.take();
            Ok((next, serde_json::to_value(out)?))
        }
        Action::OptimalTrade { utility, commit, options } => {
            let sol = optimal_trade(s, utility, options)?;
            let next = if *commit { Some(s.execute_trade(&sol.trade)?) } else { None };
            Ok((next, serde_json::to_value(sol)?))
        }
        Action::Sweep { name, from, to, direction, grid } => {
            let rows = quote_sweep(s, resolve_asset(s, from)?, resolve_asset(s, to)?, *direction, &grid.parse()?)?;
            let feasible = rows.iter().filter(|r| r.output.is_some()).count();
            sweeps.push((name.clone(), *direction, rows));
            Ok((None, json!({ "name": name, "feasible_points": feasible })))
        }
        Action::RandomSwaps { count, max_fraction } => {
            let n = s.n();
            if n < 2 {
                return Err(Error::invalid("random swaps need at least two assets"));
            }
            let mut cur = s.clone();
            let mut swaps = Vec::with_capacity(*count);
            for _ in 0..*count {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let delta = cur.reserves()[i] * max_fraction * rng.random::<f64>();
                let q = forward_exchange(&cur, i, j, delta)?;
                let mut t = Trade::zero(n);
                t.delta[i] = delta;
                t.lambda[j] = q.output_amount;
                cur = cur.execute_trade(&t)?;
                swaps.push(json!({ "from": i, "to": j, "delta": delta, "lambda": q.output_amount }));
            }
            Ok((Some(cur), Value::Array(swaps)))
        }
    }
}

/// Writes `log.json`, `final_state.json`, and one CSV per sweep into `out`.
pub fn write_outcome(out: &Path, outcome: &ScenarioOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let log_path = out.join("log.json");
    fs::write(&log_path, serde_json::to_string_pretty(&outcome.log)? + "\n")?;
    written.push(log_path);
    let state_path = out.join("final_state.json");
    save_state(&state_path, &outcome.final_state)?;
    written.push(state_path);
    for (name, direction, rows) in &outcome.sweeps {
        let path = out.join(format!("{name}.csv"));
        write_sweep_csv(&path, *direction, rows)?;
        written.push(path);
    }
    Ok(written)
}
