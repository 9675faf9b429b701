//! Oracles and randomized property checks shared by the property suite and
//! the acceptance target.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use cfmm::engine::{check_acceptance, gradient_scale, price_vector, Trade};
use cfmm::solver::{solve_liquidity_problem, solve_trade_problem};
use cfmm::two_asset::{
    forward_exchange, forward_exchange_with, liquidation_value, purchase_cost, reverse_exchange,
    reverse_exchange_with, ExchangeMethod,
};
use cfmm::{
    utility_oracle, CfmmState, ConcaveObjective, LiquidityDirection, Result as CfmmResult, ScalarUtility,
    SolveOptions, TradingFunction, TradingFunctionSpec, UtilitySpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const PROP_CASES: u32 = 500;

pub fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs `test` on `cases` inputs drawn from `strategy`.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>,
) -> std::result::Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

fn ok<T>(r: CfmmResult<T>) -> std::result::Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

// ---------------------------------------------------------------------------
// strategies

fn reserve() -> impl Strategy<Value = f64> {
    (-1.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

fn reserves(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(reserve(), n)
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), 0.9f64..1.0]
}

/// Any of the five trading functions on `n` assets.
pub fn spec(n: usize) -> BoxedStrategy<TradingFunctionSpec> {
    prop_oneof![
        prop::collection::vec(0.2f64..5.0, n).prop_map(|p| TradingFunctionSpec::linear(p).unwrap()),
        Just(TradingFunctionSpec::sum(n).unwrap()),
        weights(n).prop_map(|w| TradingFunctionSpec::geometric_mean(w).unwrap()),
        (0.05f64..1.0, weights(n)).prop_map(|(a, w)| TradingFunctionSpec::hybrid(a, w).unwrap()),
        (0.05f64..3.0).prop_map(move |a| TradingFunctionSpec::curve_like(a, n).unwrap()),
    ]
    .boxed()
}

pub fn state_with(spec_of: fn(usize) -> BoxedStrategy<TradingFunctionSpec>) -> BoxedStrategy<CfmmState> {
    (2usize..=5)
        .prop_flat_map(move |n| (reserves(n), gamma(), spec_of(n)))
        .prop_map(|(r, g, phi)| CfmmState::new(r, g, phi).unwrap())
        .boxed()
}

pub fn any_state() -> BoxedStrategy<CfmmState> {
    state_with(spec)
}

fn curved_spec(n: usize) -> BoxedStrategy<TradingFunctionSpec> {
    prop_oneof![
        weights(n).prop_map(|w| TradingFunctionSpec::geometric_mean(w).unwrap()),
        (0.05f64..1.0, weights(n)).prop_map(|(a, w)| TradingFunctionSpec::hybrid(a, w).unwrap()),
        (0.05f64..3.0).prop_map(move |a| TradingFunctionSpec::curve_like(a, n).unwrap()),
    ]
    .boxed()
}

fn homogeneous_spec(n: usize) -> BoxedStrategy<TradingFunctionSpec> {
    prop_oneof![
        prop::collection::vec(0.2f64..5.0, n).prop_map(|p| TradingFunctionSpec::linear(p).unwrap()),
        Just(TradingFunctionSpec::sum(n).unwrap()),
        weights(n).prop_map(|w| TradingFunctionSpec::geometric_mean(w).unwrap()),
        (0.05f64..1.0, weights(n)).prop_map(|(a, w)| TradingFunctionSpec::hybrid(a, w).unwrap()),
    ]
    .boxed()
}

/// State, ordered pair `(i, j)`, and a fraction in (0, 1).
fn state_pair_fraction(states: BoxedStrategy<CfmmState>) -> impl Strategy<Value = (CfmmState, usize, usize, f64)> {
    states.prop_flat_map(|s| {
        let n = s.n();
        (Just(s), 0..n, 1..n, 0.01f64..0.95).prop_map(move |(s, i, k, f)| (s, i, (i + k) % n, f))
    })
}

/// Random tender basket over a random nonempty subset of non-numeraire assets.
fn basket_excluding_last(s: &CfmmState) -> impl Strategy<Value = Vec<f64>> {
    let n = s.n();
    let r = s.reserves().to_vec();
    prop::collection::vec((any::<bool>(), 0.0f64..1.0), n - 1).prop_map(move |picks| {
        let mut b: Vec<f64> = picks.iter().zip(&r).map(|((on, f), r)| if *on { f * r } else { 0.0 }).collect();
        if b.iter().all(|x| *x == 0.0) {
            b[0] = 0.5 * r[0];
        }
        b.push(0.0);
        b
    })
}

// ---------------------------------------------------------------------------
// oracles

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..300 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    f(0.5 * (lo + hi)).max(f(lo)).max(f(hi))
}

/// Best utility over single-direction two-asset trades `λ = F(δ)`, both
/// directions.
pub fn pair_oracle(s: &CfmmState, u: &dyn ConcaveObjective) -> f64 {
    let mut best = u.value(&[0.0, 0.0]).unwrap();
    for (i, j) in [(0usize, 1usize), (1, 0)] {
        let r_j = s.reserves()[j];
        let d_max = reverse_exchange(s, i, j, r_j * (1.0 - 1e-9)).unwrap().input_amount;
        let value = |d: f64| {
            let lam = forward_exchange(s, i, j, d).unwrap().output_amount;
            let mut z = [0.0; 2];
            z[i] -= d;
            z[j] += lam;
            u.value(&z).unwrap()
        };
        best = best.max(golden_max(value, 0.0, d_max));
    }
    best
}

/// Refining 2-d grid search for a three-asset pool: receive asset 1 for a
/// tender mix of assets 2 and 3.
pub fn three_asset_grid_oracle(s: &CfmmState, u: &dyn ConcaveObjective) -> f64 {
    let value = |a: f64, b: f64| -> f64 {
        let q = cfmm::two_asset::basket_forward(s, &[0.0, a, b], &[1.0, 0.0, 0.0], 1.0).unwrap();
        u.value(&[q.output_amount, -a, -b]).unwrap()
    };
    let (mut ca, mut cb) = (s.reserves()[1] / 2.0, s.reserves()[2] / 2.0);
    let mut width = ca.max(cb);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..40 {
        let mut arg = (ca, cb);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = (ca - width + 2.0 * width * i as f64 / 20.0).max(0.0);
                let b = (cb - width + 2.0 * width * j as f64 / 20.0).max(0.0);
                let f = value(a, b);
                if f > best {
                    best = f;
                    arg = (a, b);
                }
            }
        }
        ca = arg.0;
        cb = arg.1;
        width *= 0.6;
    }
    best
}

/// Optimal utility from the solver, after checking the trade is valid.
pub fn solved_utility(s: &CfmmState, u: &dyn ConcaveObjective) -> (Trade, f64) {
    let (t, report) = solve_trade_problem(s, u, &SolveOptions::default()).unwrap();
    assert!(report.kkt_residual <= 1e-8, "{report:?}");
    assert!(s.check_trade(&t).unwrap().accepted);
    let v = u.value(&t.net()).unwrap();
    (t, v)
}

pub fn linear(pi: Vec<f64>) -> cfmm::optimal_trade::UtilityOracle {
    utility_oracle(&UtilitySpec::Linear { pi }).unwrap()
}

/// Two-asset pools of every kind used by the small-instance checks.
pub fn pair_states() -> Vec<CfmmState> {
    let r = vec![3.0, 7.0];
    [
        TradingFunctionSpec::linear(vec![1.5, 1.0]).unwrap(),
        TradingFunctionSpec::sum(2).unwrap(),
        TradingFunctionSpec::geometric_mean(vec![0.3, 0.7]).unwrap(),
        TradingFunctionSpec::hybrid(0.6, vec![0.4, 0.6]).unwrap(),
        TradingFunctionSpec::curve_like(2.0, 2).unwrap(),
    ]
    .into_iter()
    .map(|phi| CfmmState::new(r.clone(), 0.98, phi).unwrap())
    .collect()
}

/// Largest relative gap between solver and golden-section optimal utility
/// across all pair pools and three private-price vectors each.
pub fn pair_oracle_gap() -> f64 {
    let mut worst = 0.0_f64;
    for s in pair_states() {
        let p = s.prices().unwrap();
        for pi in [vec![1.3 * p[0], 1.0], vec![0.6 * p[0], 1.0], vec![3.0 * p[0], 1.0]] {
            let u = linear(pi);
            let (_, v) = solved_utility(&s, &u);
            let oracle = pair_oracle(&s, &u);
            worst = worst.max((v - oracle).abs() / oracle.abs().max(1e-12));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// closed form against iterative exchange functions

/// Worst relative disagreement between closed-form and Newton/bisection
/// exchange functions, and worst `|G(F(δ)) − δ| / (1 + δ)`, over 100-point
/// grids on `states` random Sum and GeometricMean pools.
pub fn closed_form_grid(states: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst_method = 0.0_f64;
    let mut worst_inverse = 0.0_f64;
    for k in 0..states {
        let n = rng.random_range(2..=5);
        let r: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..2.0))).collect();
        let gamma = if k % 4 == 0 { 1.0 } else { rng.random_range(0.9..1.0) };
        let phi = if k % 2 == 0 {
            TradingFunctionSpec::sum(n).unwrap()
        } else {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            TradingFunctionSpec::geometric_mean(w.iter().map(|x| x / total).collect()).unwrap()
        };
        let s = CfmmState::new(r, gamma, phi).unwrap();
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let r_i = s.reserves()[i];
        let r_j = s.reserves()[j];
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        for step in 1..=100 {
            let delta = 2.0 * r_i * step as f64 / 100.0;
            let exact = forward_exchange(&s, i, j, delta).unwrap().output_amount;
            for m in [ExchangeMethod::Newton, ExchangeMethod::Bisection] {
                let v = forward_exchange_with(&s, i, j, delta, m).unwrap().output_amount;
                worst_method = worst_method.max(rel(v, exact));
            }
            if exact < r_j {
                let back = reverse_exchange(&s, i, j, exact).unwrap().input_amount;
                worst_inverse = worst_inverse.max((back - delta).abs() / (1.0 + delta));
            }

            let lam = 0.99 * r_j * step as f64 / 100.0;
            let exact = reverse_exchange(&s, i, j, lam).unwrap().input_amount;
            for m in [ExchangeMethod::Newton, ExchangeMethod::Bisection] {
                let v = reverse_exchange_with(&s, i, j, lam, m).unwrap().input_amount;
                worst_method = worst_method.max(rel(v, exact));
            }
        }
    }
    (worst_method, worst_inverse)
}

// ---------------------------------------------------------------------------
// properties

/// `pᵀ(Δ − Λ) ≥ (1 − γ)pᵀΔ` for valid trades.
pub fn prop_trading_cost(cases: u32) -> std::result::Result<(), String> {
    let strat = any_state().prop_flat_map(|s| {
        let n = s.n();
        let r = s.reserves().to_vec();
        let split = 1..n;
        (Just(s), split, prop::collection::vec(0.0f64..1.0, n), 0.0f64..=1.0).prop_map(move |(s, k, f, u)| {
            let delta: Vec<f64> = (0..n).map(|i| if i < k { f[i] * r[i] } else { 0.0 }).collect();
            let dir: Vec<f64> = (0..n).map(|i| if i >= k { f[i] + 0.05 } else { 0.0 }).collect();
            (s, delta, dir, u)
        })
    });
    check(cases, strat, |(s, delta, dir, u)| {
        let q = ok(cfmm::two_asset::basket_forward(&s, &delta, &dir, 1.0))?;
        let lambda: Vec<f64> = dir.iter().map(|d| d * q.output_amount * u).collect();
        let t = Trade::new(delta.clone(), lambda.clone()).unwrap();
        ensure!(ok(s.check_trade(&t))?.accepted, "constructed trade rejected");
        let p = ok(s.prices())?;
        let pd: f64 = p.iter().zip(&delta).map(|(a, b)| a * b).sum();
        let pl: f64 = p.iter().zip(&lambda).map(|(a, b)| a * b).sum();
        let lhs = pd - pl;
        let rhs = (1.0 - s.gamma()) * pd;
        ensure!(lhs >= rhs - 1e-9 * (1.0 + pd), "pᵀ(Δ−Λ) = {lhs} < (1−γ)pᵀΔ = {rhs}");
        Ok(())
    })
}

/// Second differences: `F` concave, `G` convex.
pub fn prop_exchange_curvature(cases: u32) -> std::result::Result<(), String> {
    check(cases, state_pair_fraction(any_state()), |(s, i, j, f)| {
        let r_i = s.reserves()[i];
        let r_j = s.reserves()[j];
        let h = 0.02 * r_i;
        let d = f * r_i + h;
        let fwd = |x: f64| ok(forward_exchange(&s, i, j, x)).map(|q| q.output_amount);
        let (a, b, c) = (fwd(d - h)?, fwd(d)?, fwd(d + h)?);
        ensure!(a + c - 2.0 * b <= 1e-9 * (1.0 + c), "F not concave: {a} {b} {c}");

        let h = 0.02 * r_j;
        let lam = f * 0.9 * r_j + h;
        let rev = |x: f64| ok(reverse_exchange(&s, i, j, x)).map(|q| q.input_amount);
        let (a, b, c) = (rev(lam - h)?, rev(lam)?, rev(lam + h)?);
        ensure!(a + c - 2.0 * b >= -1e-9 * (1.0 + c), "G not convex: {a} {b} {c}");
        Ok(())
    })
}

/// `F(δ) ≤ E_ij δ` and `G(λ) ≥ λ / E_ij`.
pub fn prop_exchange_rate_bounds(cases: u32) -> std::result::Result<(), String> {
    check(cases, state_pair_fraction(any_state()), |(s, i, j, f)| {
        let e = ok(s.exchange_rate(i, j))?;
        let delta = 3.0 * f * s.reserves()[i];
        let out = ok(forward_exchange(&s, i, j, delta))?.output_amount;
        ensure!(out <= e * delta * (1.0 + 1e-12) + 1e-15, "F({delta}) = {out} > E·δ = {}", e * delta);
        let lam = f * s.reserves()[j];
        let inp = ok(reverse_exchange(&s, i, j, lam))?.input_amount;
        ensure!(inp >= lam / e * (1.0 - 1e-12) - 1e-15, "G({lam}) = {inp} < λ/E = {}", lam / e);
        Ok(())
    })
}

/// `E_ij · E_ji = γ²`.
pub fn prop_round_trip_rate(cases: u32) -> std::result::Result<(), String> {
    check(cases, state_pair_fraction(any_state()), |(s, i, j, _)| {
        let prod = ok(s.exchange_rate(i, j))? * ok(s.exchange_rate(j, i))?;
        let g2 = s.gamma() * s.gamma();
        ensure!((prod - g2).abs() <= 1e-12 * g2, "E_ij·E_ji = {prod}, γ² = {g2}");
        Ok(())
    })
}

/// Liquidation value `≤ γpᵀΔ`.
pub fn prop_liquidation_bound(cases: u32) -> std::result::Result<(), String> {
    let strat = any_state().prop_flat_map(|s| {
        let b = basket_excluding_last(&s);
        (Just(s), b)
    });
    check(cases, strat, |(s, delta)| {
        let alpha = ok(liquidation_value(&s, &delta))?.output_amount;
        let p = ok(s.prices())?;
        let bound = s.gamma() * p.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>();
        ensure!(alpha <= bound + 1e-9, "liquidation {alpha} > γpᵀΔ = {bound}");
        Ok(())
    })
}

/// Purchase cost `≥ pᵀΛ / γ`.
pub fn prop_purchase_bound(cases: u32) -> std::result::Result<(), String> {
    let strat = any_state().prop_flat_map(|s| {
        let b = basket_excluding_last(&s).prop_map(|b| b.iter().map(|x| 0.9 * x).collect::<Vec<f64>>());
        (Just(s), b)
    });
    check(cases, strat, |(s, lambda)| {
        let alpha = ok(purchase_cost(&s, &lambda))?.input_amount;
        let p = ok(s.prices())?;
        let bound = p.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>() / s.gamma();
        ensure!(alpha >= bound - 1e-9, "purchase {alpha} < pᵀΛ/γ = {bound}");
        Ok(())
    })
}

/// Gradient scale on liquidity changes: strictly below 1 on adds and above 1
/// on removes for CurveLike; exactly 1 for homogeneous functions, whose
/// gradients are scale invariant.
pub fn prop_liquidity_scale(cases: u32) -> std::result::Result<(), String> {
    let curve = (2usize..=3, 0.05f64..3.0)
        .prop_flat_map(|(n, a)| (reserves(n), Just(a), 0.01f64..0.5, any::<bool>()))
        .prop_map(|(r, a, frac, add)| {
            let n = r.len();
            (CfmmState::new(r, 1.0, TradingFunctionSpec::curve_like(a, n).unwrap()).unwrap(), frac, add)
        });
    let homog = state_with(homogeneous_spec).prop_flat_map(|s| (Just(s), 0.01f64..0.9, any::<bool>()));
    let strat = prop_oneof![curve.prop_map(|c| (c, true)), homog.prop_map(|h| (h, false))];
    check(cases, strat, |((s, frac, add), curved)| {
        let check = if curved {
            // the value-budgeted optimum can mix signs, so compare reserves directly
            let value = ok(s.reserve_value())?;
            let m = if add { frac * value } else { -frac * value };
            let sol = ok(solve_liquidity_problem(&s, m, &SolveOptions::default()))?;
            ok(gradient_scale(s.phi(), s.reserves(), &sol.reserves_after))?
        } else {
            let direction = if add { LiquidityDirection::Add } else { LiquidityDirection::Remove };
            let basket: Vec<f64> = s.reserves().iter().map(|r| frac * r).collect();
            ok(s.check_liquidity_change(&basket, direction))?
        };
        ensure!(check.valid, "gradients not collinear (spread {})", check.spread);
        if curved {
            let side = if add { check.alpha < 1.0 } else { check.alpha > 1.0 };
            ensure!(side, "α = {} with add = {add}", check.alpha);
        } else {
            ensure!((check.alpha - 1.0).abs() <= 1e-12, "homogeneous α = {}", check.alpha);
        }
        Ok(())
    })
}

/// Provider weights stay positive and sum to 1 over random add/remove
/// sequences.
pub fn prop_weights_sum(cases: u32) -> std::result::Result<(), String> {
    let op = (0usize..4, any::<bool>(), 0.0f64..0.6);
    let strat = (state_with(homogeneous_spec), prop::collection::vec(op, 1..12));
    check(cases, strat, |(mut s, ops)| {
        for (who, add, nu) in ops {
            let id = format!("lp{who}");
            let direction = if add { LiquidityDirection::Add } else { LiquidityDirection::Remove };
            let basket: Vec<f64> = s.reserves().iter().map(|r| nu * r).collect();
            match s.execute_liquidity_change(&id, &basket, direction) {
                Ok(next) => s = next,
                Err(cfmm::Error::InsufficientShare { .. }) | Err(cfmm::Error::UnknownProvider(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            let total: f64 = s.providers().values().sum();
            ensure!((total - 1.0).abs() <= 1e-12, "weights sum to {total}");
            ensure!(s.providers().values().all(|w| *w > 0.0), "nonpositive weight in {:?}", s.providers());
        }
        Ok(())
    })
}

fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1e-3);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Analytic gradients of every trading function and utility against
/// central differences.
pub fn prop_gradients(cases: u32) -> std::result::Result<(), String> {
    let utility = (2usize..=4).prop_flat_map(|n| {
        let z = prop::collection::vec(0.5f64..3.0, n);
        let at = prop::collection::vec(-0.4f64..0.4, n);
        let mu = prop::collection::vec(-0.1f64..0.1, n);
        let v = prop::collection::vec(-1.0f64..1.0, n * n);
        let samples = prop::collection::vec(prop::collection::vec(0.5f64..1.5, n), 1..6);
        let psi = prop_oneof![
            Just(ScalarUtility::Log),
            (-2.0f64..0.9).prop_filter("a ≠ 0", |a| a.abs() > 0.05).prop_map(|a| ScalarUtility::Power { a }),
            (0.1f64..3.0).prop_map(|a| ScalarUtility::NegExp { a }),
        ];
        (z, at, mu, v, samples, psi, 0.01f64..10.0, any::<bool>()).prop_map(
            move |(z, at, mu, v, samples, psi, kappa, markowitz)| {
                let spec = if markowitz {
                    let v = DMatrix::from_row_slice(n, n, &v);
                    let sigma = v.transpose() * &v;
                    UtilitySpec::Markowitz {
                        z_curr: z,
                        mu,
                        sigma: (0..n).map(|i| (0..n).map(|j| sigma[(i, j)]).collect()).collect(),
                        kappa,
                    }
                } else {
                    UtilitySpec::ExpectedUtility { z_curr: z, return_samples: samples, psi }
                };
                (spec, at)
            },
        )
    });
    let strat = (any_state(), utility);
    check(cases, strat, |(s, (u, at))| {
        let phi = s.phi();
        let r = s.reserves();
        let g = ok(phi.gradient(r))?;
        let fd = fd_gradient(|x| phi.value(x).unwrap(), r);
        let gap = max_rel_gap(&g, &fd);
        ensure!(gap <= 1e-6, "{phi:?} at {r:?}: gradient {g:?} vs {fd:?} ({gap:e})");

        let o = ok(utility_oracle(&u))?;
        let g = ok(o.gradient(&at))?;
        let fd = fd_gradient(|x| o.value(x).unwrap(), &at);
        let gap = max_rel_gap(&g, &fd);
        ensure!(gap <= 1e-6, "{u:?} at {at:?}: gradient {g:?} vs {fd:?} ({gap:e})");
        Ok(())
    })
}

/// `log ∘ φ` as a trading function.
pub struct LogPhi<'a>(pub &'a TradingFunctionSpec);

impl TradingFunction for LogPhi<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, r: &[f64]) -> CfmmResult<f64> {
        let v = self.0.value(r)?;
        if !(v > 0.0) {
            return Err(cfmm::Error::Domain(format!("log of nonpositive {v}")));
        }
        Ok(v.ln())
    }

    fn gradient(&self, r: &[f64]) -> CfmmResult<Vec<f64>> {
        let v = self.0.value(r)?;
        Ok(self.0.gradient(r)?.iter().map(|g| g / v).collect())
    }

    fn hessian(&self, r: &[f64]) -> CfmmResult<DMatrix<f64>> {
        let v = self.0.value(r)?;
        let g = nalgebra::DVector::from_vec(self.0.gradient(r)?);
        Ok(self.0.hessian(r)? / v - &g * g.transpose() / (v * v))
    }

    fn is_homogeneous(&self) -> bool {
        false
    }
}

fn positive_spec(n: usize) -> BoxedStrategy<TradingFunctionSpec> {
    homogeneous_spec(n)
}

/// Acceptance decisions, prices, and liquidity collinearity agree between
/// `φ` and `log ∘ φ`.
pub fn prop_log_composition(cases: u32) -> std::result::Result<(), String> {
    let strat = state_with(positive_spec).prop_flat_map(|s| {
        let n = s.n();
        let r = s.reserves().to_vec();
        let trade = (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(0.0f64..1.0, n)).prop_map(
            move |(d, l)| {
                let delta: Vec<f64> = d.iter().zip(&r).map(|(f, r)| if *f < 0.5 { 0.0 } else { f * r }).collect();
                let lambda: Vec<f64> =
                    l.iter().zip(&r).zip(&delta).map(|((f, r), d)| if *d > 0.0 { 0.0 } else { 0.9 * f * r }).collect();
                Trade::new(delta, lambda).unwrap()
            },
        );
        (Just(s), trade, prop::collection::vec(0.5f64..2.0, n), 0.01f64..0.9)
    });
    check(cases, strat, |(s, t, skew, nu)| {
        let phi = s.phi();
        let log_phi = LogPhi(phi);
        let r = s.reserves();
        let a = ok(check_acceptance(phi, r, s.gamma(), &t))?;
        let b = ok(check_acceptance(&log_phi, r, s.gamma(), &t))?;
        // decisions can only differ inside the rounding band around equality
        let rel = a.surplus.abs() / a.phi_before.abs().max(1e-300);
        if rel > 1e-7 {
            ensure!(a.accepted == b.accepted, "φ says {}, log φ says {} for {t:?}", a.accepted, b.accepted);
        }

        let pa = ok(price_vector(phi, r))?;
        let pb = ok(price_vector(&log_phi, r))?;
        ensure!(max_rel_gap(&pa, &pb) <= 1e-12, "prices {pa:?} vs {pb:?}");

        let proportional: Vec<f64> = r.iter().map(|x| x * (1.0 + nu)).collect();
        let skewed: Vec<f64> = r.iter().zip(&skew).map(|(x, k)| x * k).collect();
        for after in [proportional, skewed] {
            let ca = ok(gradient_scale(phi, r, &after))?;
            let cb = ok(gradient_scale(&log_phi, r, &after))?;
            if (ca.spread - 1e-8).abs() > 1e-10 {
                ensure!(ca.valid == cb.valid, "collinearity {ca:?} vs {cb:?}");
            }
            ensure!((ca.spread - cb.spread).abs() <= 1e-12 * (1.0 + ca.spread), "spreads {} vs {}", ca.spread, cb.spread);
        }
        Ok(())
    })
}

pub type Property = (&'static str, fn(u32) -> std::result::Result<(), String>);

pub const PROPERTIES: [Property; 10] = [
    ("trading cost inequality", prop_trading_cost),
    ("F concave, G convex", prop_exchange_curvature),
    ("F ≤ E·δ, G ≥ λ/E", prop_exchange_rate_bounds),
    ("liquidation bound", prop_liquidation_bound),
    ("purchase bound", prop_purchase_bound),
    ("E_ij·E_ji = γ²", prop_round_trip_rate),
    ("liquidity gradient scale", prop_liquidity_scale),
    ("provider weights sum to 1", prop_weights_sum),
    ("finite-difference gradients", prop_gradients),
    ("log composition equivalence", prop_log_composition),
];
