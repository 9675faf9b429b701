//! Data behind the four reference figures, written as CSV.
//!
//! | file | columns |
//! |------|---------|
//! | `fig1_forward.csv` | `R1,R2,delta,F_delta` |
//! | `fig1_reverse.csv` | `R1,R2,lambda,G_lambda,feasible` (`inf` where infeasible) |
//! | `fig2_boundary.csv` | `delta3,delta4,residual` |
//! | `fig3_linear.csv` | `t,z1..z6,utility_gain` |
//! | `fig4_markowitz.csv` | `kappa,z1..z6,slack,kkt` |

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{linspace, logspace, num};
use crate::engine::{CfmmState, Trade};
use crate::error::{Error, Result};
use crate::optimal_trade::{optimal_trade, UtilitySpec};
use crate::solver::SolveOptions;
use crate::trading_functions::TradingFunctionSpec;
use crate::two_asset::{complete_tender, forward_exchange, reverse_exchange};

/// Seed for the Fig. 4 covariance draw.
pub const FIG4_SEED: u64 = 6;

pub const FIG1_GAMMA: f64 = 0.997;
pub const FIG1_WEIGHTS: [f64; 2] = [0.2, 0.8];
pub const FIG1_RESERVES: [[f64; 2]; 2] = [[1.0, 100.0], [0.1, 10.0]];

pub const FIG2_GAMMA: f64 = 0.997;
pub const FIG2_RESERVES: [f64; 4] = [4.0, 5.0, 6.0, 7.0];
pub const FIG2_RECEIVE: [f64; 4] = [2.0, 4.0, 0.0, 0.0];

pub const FIG3_GAMMA: f64 = 0.9;
pub const FIG3_RESERVES: [f64; 6] = [1.0, 3.0, 2.0, 5.0, 7.0, 6.0];

pub const FIG4_GAMMA: f64 = 0.997;
pub const FIG4_Z_CURR: [f64; 6] = [2.5, 1.0, 0.5, 2.5, 3.0, 1.0];
pub const FIG4_MU: [f64; 6] = [-0.01, 0.01, 0.03, 0.05, -0.02, 0.02];

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Row {
    pub reserves: [f64; 2],
    pub amount: f64,
    /// `F(δ)` in the forward table, `G(λ)` (`None` if infeasible) in the
    /// reverse table.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Data {
    pub forward: Vec<Fig1Row>,
    pub reverse: Vec<Fig1Row>,
}

pub fn fig1_state(reserves: [f64; 2]) -> Result<CfmmState> {
    CfmmState::new(reserves.to_vec(), FIG1_GAMMA, TradingFunctionSpec::geometric_mean(FIG1_WEIGHTS.to_vec())?)
}

pub fn fig1() -> Result<Fig1Data> {
    let mut forward = Vec::new();
    let mut reverse = Vec::new();
    for r in FIG1_RESERVES {
        let s = fig1_state(r)?;
        for delta in linspace(0.0, 2.0, 201) {
            let q = forward_exchange(&s, 0, 1, delta)?;
            forward.push(Fig1Row { reserves: r, amount: delta, value: Some(q.output_amount) });
        }
        for lam in linspace(0.0, 20.0, 201) {
            let value = match reverse_exchange(&s, 0, 1, lam) {
                Ok(q) => Some(q.input_amount),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            };
            reverse.push(Fig1Row { reserves: r, amount: lam, value });
        }
    }
    Ok(Fig1Data { forward, reverse })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Point {
    pub delta3: f64,
    pub delta4: f64,
    /// `φ(R + γΔ − Λ) − φ(R)` at the boundary point.
    pub residual: f64,
}

pub fn fig2_state() -> Result<CfmmState> {
    CfmmState::new(FIG2_RESERVES.to_vec(), FIG2_GAMMA, TradingFunctionSpec::constant_product(4)?)
}

/// Boundary `Δ₄(Δ₃)` of the valid tender region with `Δ₁ = Δ₂ = 0`.
/// Past `Δ₃ = 54/γ` the receive basket is paid for by asset 3 alone.
pub fn fig2_boundary(points: usize) -> Result<Vec<Fig2Point>> {
    let s = fig2_state()?;
    let d3_max = 54.0 / FIG2_GAMMA;
    linspace(0.0, d3_max, points)
        .into_iter()
        .map(|d3| {
            let t = Trade::new(vec![0.0, 0.0, d3, 0.0], FIG2_RECEIVE.to_vec())?;
            let q = complete_tender(&s, &t, 3)?;
            Ok(Fig2Point { delta3: d3, delta4: q.input_amount, residual: q.residual })
        })
        .collect()
}

/// Whether the boundary is decreasing and convex, up to `tol` in the first
/// and second differences.
pub fn is_convex_decreasing(points: &[Fig2Point], tol: f64) -> bool {
    let decreasing = points.windows(2).all(|w| w[1].delta4 <= w[0].delta4 + tol);
    let convex = points.windows(3).all(|w| {
        let (x0, x1, x2) = (w[0].delta3, w[1].delta3, w[2].delta3);
        let s01 = (w[1].delta4 - w[0].delta4) / (x1 - x0);
        let s12 = (w[2].delta4 - w[1].delta4) / (x2 - x1);
        s12 >= s01 - tol
    });
    decreasing && convex
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRow {
    /// `t` for Fig. 3, `κ` for Fig. 4.
    pub param: f64,
    /// `Λ − Δ`
    pub z: Vec<f64>,
    pub utility_gain: f64,
    pub slack: f64,
    pub kkt: f64,
}

pub fn fig3_state() -> Result<CfmmState> {
    CfmmState::new(FIG3_RESERVES.to_vec(), FIG3_GAMMA, TradingFunctionSpec::constant_product(6)?)
}

/// Linear utility with private prices `(t·p₁, p₂, …, pₙ)`.
pub fn fig3_utility(s: &CfmmState, t: f64) -> Result<UtilitySpec> {
    let mut pi = s.prices()?;
    pi[0] *= t;
    Ok(UtilitySpec::Linear { pi })
}

pub fn fig3_row(s: &CfmmState, t: f64) -> Result<TradeRow> {
    let sol = optimal_trade(s, &fig3_utility(s, t)?, &SolveOptions::default())?;
    Ok(TradeRow {
        param: t,
        z: sol.trade.net(),
        utility_gain: sol.utility_gain,
        slack: sol.report.constraint_slack,
        kkt: sol.report.kkt_residual,
    })
}

pub fn fig3(points: usize) -> Result<Vec<TradeRow>> {
    let s = fig3_state()?;
    linspace(0.5, 2.0, points).into_iter().map(|t| fig3_row(&s, t)).collect()
}

/// `Σ = VᵀV/100` with `V` a 6×6 standard normal draw from ChaCha8 seeded by
/// `seed`, filled row by row.
pub fn fig4_sigma(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DMatrix::<f64>::zeros(6, 6);
    for i in 0..6 {
        for j in 0..6 {
            v[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let sigma = v.transpose() * &v / 100.0;
    (0..6).map(|i| (0..6).map(|j| sigma[(i, j)]).collect()).collect()
}

pub fn fig4_state() -> Result<CfmmState> {
    CfmmState::new(FIG3_RESERVES.to_vec(), FIG4_GAMMA, TradingFunctionSpec::constant_product(6)?)
}

pub fn fig4_utility(sigma: &[Vec<f64>], kappa: f64) -> UtilitySpec {
    UtilitySpec::Markowitz {
        z_curr: FIG4_Z_CURR.to_vec(),
        mu: FIG4_MU.to_vec(),
        sigma: sigma.to_vec(),
        kappa,
    }
}

pub fn fig4(seed: u64, points: usize) -> Result<Vec<TradeRow>> {
    let s = fig4_state()?;
    let sigma = fig4_sigma(seed);
    logspace(1e-2, 10.0, points)
        .into_iter()
        .map(|kappa| {
            let sol = optimal_trade(&s, &fig4_utility(&sigma, kappa), &SolveOptions::default())?;
            Ok(TradeRow {
                param: kappa,
                z: sol.trade.net(),
                utility_gain: sol.utility_gain,
                slack: sol.report.constraint_slack,
                kkt: sol.report.kkt_residual,
            })
        })
        .collect()
}

fn write_fig1(out: &Path, data: &Fig1Data) -> Result<Vec<PathBuf>> {
    let fwd = out.join("fig1_forward.csv");
    let mut w = csv::Writer::from_path(&fwd)?;
    w.write_record(["R1", "R2", "delta", "F_delta"])?;
    for r in &data.forward {
        let v = r.value.unwrap_or(f64::NAN);
        w.write_record([r.reserves[0], r.reserves[1], r.amount, v].map(num))?;
    }
    w.flush()?;
    let rev = out.join("fig1_reverse.csv");
    let mut w = csv::Writer::from_path(&rev)?;
    w.write_record(["R1", "R2", "lambda", "G_lambda", "feasible"])?;
    for r in &data.reverse {
        w.write_record([
            num(r.reserves[0]),
            num(r.reserves[1]),
            num(r.amount),
            r.value.map_or("inf".to_string(), num),
            r.value.is_some().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![fwd, rev])
}

fn write_fig2(out: &Path, points: &[Fig2Point]) -> Result<Vec<PathBuf>> {
    let path = out.join("fig2_boundary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["delta3", "delta4", "residual"])?;
    for p in points {
        w.write_record([p.delta3, p.delta4, p.residual].map(num))?;
    }
    w.flush()?;
    Ok(vec![path])
}

fn write_trade_rows(path: PathBuf, param: &str, rows: &[TradeRow], tail: &[&str]) -> Result<Vec<PathBuf>> {
    let mut w = csv::Writer::from_path(&path)?;
    let n = rows.first().map_or(0, |r| r.z.len());
    let mut header = vec![param.to_string()];
    header.extend((1..=n).map(|i| format!("z{i}")));
    header.extend(tail.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.param];
        rec.extend(&r.z);
        for col in tail {
            rec.push(match *col {
                "utility_gain" => r.utility_gain,
                "slack" => r.slack,
                _ => r.kkt,
            });
        }
        w.write_record(rec.into_iter().map(num))?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Generates figure `which` (1 to 4) into `out`, returning the files written.
pub fn generate(which: u8, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    match which {
        1 => write_fig1(out, &fig1()?),
        2 => write_fig2(out, &fig2_boundary(201)?),
        3 => write_trade_rows(out.join("fig3_linear.csv"), "t", &fig3(151)?, &["utility_gain"]),
        4 => write_trade_rows(out.join("fig4_markowitz.csv"), "kappa", &fig4(seed, 20)?, &["slack", "kkt"]),
        _ => Err(Error::invalid(format!("no figure {which}; choose 1 to 4"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fig1_initial_slope_and_supremum() {
        let d = fig1().unwrap();
        for r in FIG1_RESERVES {
            let s = fig1_state(r).unwrap();
            assert_relative_eq!(s.exchange_rate(0, 1).unwrap(), 24.925, max_relative = 1e-12);
            let rows: Vec<_> = d.forward.iter().filter(|x| x.reserves == r).collect();
            assert_eq!(rows[0].value, Some(0.0));
            assert!(rows.iter().all(|x| x.value.unwrap() < r[1]));
        }
        let infeasible = d.reverse.iter().filter(|x| x.value.is_none()).count();
        assert!(infeasible > 0);
    }

    #[test]
    fn fig2_matches_closed_form() {
        let pts = fig2_boundary(201).unwrap();
        let g = FIG2_GAMMA;
        for p in &pts {
            let exact = ((420.0 / (6.0 + g * p.delta3) - 7.0) / g).max(0.0);
            assert!((p.delta4 - exact).abs() <= 1e-9 * (1.0 + exact), "{p:?} vs {exact}");
            assert!(p.residual.abs() <= 1e-9);
        }
        assert!(is_convex_decreasing(&pts, 1e-9));
        assert!(pts.last().unwrap().delta4 < 1e-9);
    }

    #[test]
    fn sigma_is_symmetric_and_seeded() {
        let a = fig4_sigma(FIG4_SEED);
        assert_eq!(a, fig4_sigma(FIG4_SEED));
        assert_ne!(a, fig4_sigma(FIG4_SEED + 1));
        for (i, row) in a.iter().enumerate() {
            assert!(row[i] > 0.0);
            for (j, x) in row.iter().enumerate() {
                assert_eq!(*x, a[j][i]);
            }
        }
    }
}
