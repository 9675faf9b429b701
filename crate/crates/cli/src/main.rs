use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cfmm::harness::figures::{self, FIG4_SEED};
use cfmm::harness::scenario::{self, ScenarioConfig};
use cfmm::harness::state_file::{load_state, save_state};
use cfmm::harness::{
    apply_liquidity, exit_code, load_return_samples, quote, quote_sweep, resolve_asset, write_sweep,
    write_sweep_csv,
    LiquidityAmount, QuoteDirection, Sweep,
};
use cfmm::{optimal_trade, CfmmState, LiquidityDirection, SolveOptions, TradingFunctionSpec, UtilitySpec};

#[derive(Parser)]
#[command(name = "cfmm", version, about = "Constant function market maker engine")]
struct Cli {
    /// Pool state file.
    #[arg(long, global = true, default_value = "cfmm_state.json")]
    state: PathBuf,

    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or inspect the state file.
    State {
        #[command(subcommand)]
        action: StateCmd,
    },
    /// Quote a two-asset exchange, or sweep a grid of amounts.
    Quote(QuoteArgs),
    /// Solve for the utility-maximizing trade.
    Trade(TradeArgs),
    /// Add or remove liquidity.
    Liquidity(LiquidityArgs),
    /// Write figure data as CSV.
    Figures(FigureArgs),
    /// Replay a scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Subcommand)]
enum StateCmd {
    Init(InitArgs),
    Show,
}

#[derive(Args)]
struct InitArgs {
    /// Comma-separated reserves.
    #[arg(long, value_delimiter = ',', required = true)]
    reserves: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Trading function as JSON, e.g. '{"kind":"geometric_mean","w":[0.5,0.5]}'.
    #[arg(long)]
    function: String,
    /// Comma-separated asset labels (default A1..An).
    #[arg(long, value_delimiter = ',')]
    assets: Option<Vec<String>>,
    /// Provider that owns the initial reserves.
    #[arg(long, default_value = "lp0")]
    provider: String,
    /// Overwrite an existing state file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct QuoteArgs {
    /// Tendered asset (label or zero-based index).
    #[arg(long)]
    from: String,
    /// Received asset (label or zero-based index).
    #[arg(long)]
    to: String,
    /// Input amount, or with --reverse the desired output.
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    amount: Option<f64>,
    #[arg(long)]
    reverse: bool,
    /// Grid `lo:hi:steps` of amounts.
    #[arg(long)]
    sweep: Option<String>,
    /// CSV output for --sweep (default stdout).
    #[arg(long, requires = "sweep")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TradeArgs {
    /// Utility as JSON, inline or a path to a JSON file.
    #[arg(long)]
    utility: String,
    /// CSV of return samples, replacing `return_samples` of an expected utility.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Write the post-trade state.
    #[arg(long)]
    commit: bool,
    /// KKT residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct LiquidityArgs {
    #[arg(long)]
    provider: String,
    /// Explicit comma-separated basket.
    #[arg(long, value_delimiter = ',', group = "size")]
    basket: Option<Vec<f64>>,
    /// Basket `nu·R`.
    #[arg(long, group = "size")]
    nu: Option<f64>,
    /// Value budget at current prices.
    #[arg(long, group = "size")]
    budget: Option<f64>,
    #[arg(long)]
    remove: bool,
    /// Write the updated state.
    #[arg(long)]
    commit: bool,
}

#[derive(Args)]
struct FigureArgs {
    /// Figure number 1 to 4; all four when omitted.
    #[arg(long)]
    which: Option<u8>,
    #[arg(long, default_value = "figures")]
    out: PathBuf,
    /// Seed for the Fig. 4 covariance.
    #[arg(long, default_value_t = FIG4_SEED)]
    seed: u64,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "scenario_out")]
    out: PathBuf,
}

/// `%g`-style formatting with six significant digits.
fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn g6_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| g6(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn json_or_file(arg: &str) -> anyhow::Result<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
}

fn state_init(path: &Path, a: &InitArgs, as_json: bool) -> anyhow::Result<()> {
    if path.exists() && !a.force {
        bail!(cfmm::Error::InvalidInput(format!("{} exists; pass --force to overwrite", path.display())));
    }
    let phi: TradingFunctionSpec =
        serde_json::from_str(&json_or_file(&a.function)?).map_err(cfmm::Error::from)?;
    let mut s = CfmmState::new(a.reserves.clone(), a.gamma, phi)?;
    if let Some(labels) = &a.assets {
        s = s.with_assets(labels.clone())?;
    }
    s = s.with_providers(BTreeMap::from([(a.provider.clone(), 1.0)]))?;
    save_state(path, &s)?;
    if as_json {
        print_json(&json!({ "written": path }))
    } else {
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn state_show(s: &CfmmState, as_json: bool) -> anyhow::Result<()> {
    let prices = s.prices()?;
    let phi = s.phi_value()?;
    if as_json {
        return print_json(&json!({
            "assets": s.assets(),
            "reserves": s.reserves(),
            "gamma": s.gamma(),
            "trading_function": s.phi(),
            "phi": phi,
            "prices": prices,
            "reserve_value": s.reserve_value()?,
            "providers": s.providers(),
        }));
    }
    println!("trading function  {}", s.phi().kind_name());
    println!("gamma             {}", g6(s.gamma()));
    println!("phi(R)            {}", g6(phi));
    println!("value             {}", g6(s.reserve_value()?));
    println!("{:<12} {:>14} {:>14}", "asset", "reserve", "price");
    for (i, a) in s.assets().iter().enumerate() {
        println!("{:<12} {:>14} {:>14}", a, g6(s.reserves()[i]), g6(prices[i]));
    }
    println!("providers");
    for (id, w) in s.providers() {
        println!("  {id:<10} {}", g6(*w));
    }
    Ok(())
}

fn cmd_quote(s: &CfmmState, a: &QuoteArgs, as_json: bool) -> anyhow::Result<()> {
    let i = resolve_asset(s, &a.from)?;
    let j = resolve_asset(s, &a.to)?;
    let direction = if a.reverse { QuoteDirection::Reverse } else { QuoteDirection::Forward };
    if let Some(grid) = &a.sweep {
        let sweep: Sweep = grid.parse()?;
        let rows = quote_sweep(s, i, j, direction, &sweep)?;
        match &a.out {
            Some(path) => {
                write_sweep_csv(path, direction, &rows)?;
                if !as_json {
                    println!("wrote {} rows to {}", rows.len(), path.display());
                }
            }
            None => write_sweep(std::io::stdout().lock(), direction, &rows)?,
        }
        return Ok(());
    }
    let amount = a.amount.ok_or_else(|| anyhow!(cfmm::Error::InvalidInput("missing --amount".into())))?;
    let q = quote(s, i, j, amount, direction)?;
    if as_json {
        return print_json(&serde_json::to_value(&q)?);
    }
    println!("tender   {} {}", g6(q.input_amount), s.assets()[i]);
    println!("receive  {} {}", g6(q.output_amount), s.assets()[j]);
    println!("rate     {}", g6(q.realized_rate));
    println!("method   {:?} ({} iterations)", q.method, q.iterations);
    Ok(())
}

fn cmd_trade(path: &Path, s: &CfmmState, a: &TradeArgs, as_json: bool) -> anyhow::Result<()> {
    let mut utility: UtilitySpec =
        serde_json::from_str(&json_or_file(&a.utility)?).map_err(cfmm::Error::from)?;
    if let Some(samples) = &a.samples {
        match &mut utility {
            UtilitySpec::ExpectedUtility { return_samples, .. } => *return_samples = load_return_samples(samples)?,
            _ => bail!(cfmm::Error::InvalidInput("--samples applies to expected_utility only".into())),
        }
    }
    let mut opts = SolveOptions::default();
    if let Some(tol) = a.tol {
        opts.kkt_tol = tol;
    }
    let sol = optimal_trade(s, &utility, &opts)?;
    if a.commit {
        save_state(path, &s.execute_trade(&sol.trade)?)?;
    }
    if as_json {
        let mut v = serde_json::to_value(&sol)?;
        v["committed"] = json!(a.commit);
        return print_json(&v);
    }
    println!("tender   {}", g6_list(&sol.trade.delta));
    println!("receive  {}", g6_list(&sol.trade.lambda));
    println!("gain     {}", g6(sol.utility_gain));
    println!("prices   {}", g6_list(&sol.post_prices));
    println!(
        "status   {:?}  kkt {}  slack {}  newton steps {}",
        sol.report.status,
        g6(sol.report.kkt_residual),
        g6(sol.report.constraint_slack),
        sol.report.newton_steps
    );
    if a.commit {
        println!("committed to {}", path.display());
    }
    Ok(())
}

fn cmd_liquidity(path: &Path, s: &CfmmState, a: &LiquidityArgs, as_json: bool) -> anyhow::Result<()> {
    let amount = match (&a.basket, a.nu, a.budget) {
        (Some(b), _, _) => LiquidityAmount::Basket(b.clone()),
        (_, Some(nu), _) => LiquidityAmount::Nu(nu),
        (_, _, Some(m)) => LiquidityAmount::Budget(m),
        _ => bail!(cfmm::Error::InvalidInput("give one of --basket, --nu, --budget".into())),
    };
    let direction = if a.remove { LiquidityDirection::Remove } else { LiquidityDirection::Add };
    let mut out = apply_liquidity(s, &a.provider, &amount, direction)?;
    let next = out.state.take().expect("apply_liquidity returns the new state");
    if a.commit {
        save_state(path, &next)?;
    }
    if as_json {
        let mut v = serde_json::to_value(&out)?;
        v["committed"] = json!(a.commit);
        return print_json(&v);
    }
    println!("basket   {}", g6_list(&out.basket));
    println!("alpha    {}", g6(out.alpha));
    println!("weights");
    for (id, w) in &out.weights {
        println!("  {id:<10} {}", g6(*w));
    }
    if a.commit {
        println!("committed to {}", path.display());
    }
    Ok(())
}

fn cmd_figures(a: &FigureArgs, as_json: bool) -> anyhow::Result<()> {
    let which: Vec<u8> = match a.which {
        Some(k) => vec![k],
        None => vec![1, 2, 3, 4],
    };
    let mut written = Vec::new();
    for k in which {
        written.extend(figures::generate(k, &a.out, a.seed)?);
    }
    if as_json {
        return print_json(&json!({ "written": written }));
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_scenario(a: &ScenarioArgs, as_json: bool) -> anyhow::Result<()> {
    let config = ScenarioConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let initial = config.initial_state(base)?;
    let outcome = scenario::run_scenario(&config, initial)?;
    let written = scenario::write_outcome(&a.out, &outcome)?;
    let failed = outcome.log.iter().filter(|r| !r.ok).count();
    if as_json {
        return print_json(&json!({ "steps": outcome.log.len(), "rejected": failed, "written": written }));
    }
    println!("{} actions, {} rejected", outcome.log.len(), failed);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::State { action: StateCmd::Init(a) } => state_init(&cli.state, a, cli.json),
        Command::State { action: StateCmd::Show } => state_show(&load_state(&cli.state)?, cli.json),
        Command::Quote(a) => cmd_quote(&load_state(&cli.state)?, a, cli.json),
        Command::Trade(a) => cmd_trade(&cli.state, &load_state(&cli.state)?, a, cli.json),
        Command::Liquidity(a) => cmd_liquidity(&cli.state, &load_state(&cli.state)?, a, cli.json),
        Command::Figures(a) => cmd_figures(a, cli.json),
        Command::Scenario(a) => cmd_scenario(a, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<cfmm::Error>().map_or(4, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
