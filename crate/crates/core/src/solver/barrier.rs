//! Generic smooth inequality-constrained minimization:
//! minimize `f(x)` subject to `c_k(x) ≥ 0`.

use nalgebra::{DMatrix, DVector};

use super::SolveOptions;
use crate::error::{Error, Result};

pub(crate) struct ConstraintDerivs {
    pub value: f64,
    pub grad: DVector<f64>,
    /// `None` for affine constraints.
    pub hess: Option<DMatrix<f64>>,
}

pub(crate) trait SmoothProblem {
    fn dim(&self) -> usize;
    fn objective(&self, x: &DVector<f64>) -> Result<f64>;
    fn objective_derivs(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
    /// `None` when `x` lies outside the domain of some constraint.
    fn constraint_values(&self, x: &DVector<f64>) -> Option<Vec<f64>>;
    fn constraint_derivs(&self, x: &DVector<f64>) -> Result<Vec<ConstraintDerivs>>;
    /// Weight `w` of an extra `μ·wᵀx` term that keeps every barrier
    /// subproblem bounded; it vanishes with `μ`.
    fn linear_weight(&self) -> Option<DVector<f64>> {
        None
    }
}

pub(crate) struct BarrierResult {
    pub x: DVector<f64>,
    pub mu: f64,
    pub duals: Vec<f64>,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// `f(x)` at the end of each outer iteration.
    pub history: Vec<f64>,
}

fn barrier_value<P: SmoothProblem + ?Sized>(p: &P, x: &DVector<f64>, mu: f64, w: &Option<DVector<f64>>) -> Option<f64> {
    let cs = p.constraint_values(x)?;
    if cs.iter().any(|c| !(*c > 0.0)) {
        return None;
    }
    let f = p.objective(x).ok()?;
    let lin = w.as_ref().map_or(0.0, |w| w.dot(x));
    let logs: f64 = cs.iter().map(|c| c.ln()).sum();
    let v = f + mu * (lin - logs);
    v.is_finite().then_some(v)
}

/// Solves `H d = -g`, regularizing `H` until its Cholesky factorization exists.
fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(-ch.solve(g));
    }
    let scale = h.diagonal().iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    let mut tau = 1e-12 * scale;
    for _ in 0..40 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += tau;
        }
        if let Some(ch) = reg.cholesky() {
            return Some(-ch.solve(g));
        }
        tau *= 10.0;
    }
    None
}

pub(crate) fn minimize<P: SmoothProblem + ?Sized>(
    p: &P,
    x0: DVector<f64>,
    opts: &SolveOptions,
) -> Result<BarrierResult> {
    let w = p.linear_weight();
    let mut x = x0;
    let mut mu = opts.barrier_mu0;
    if barrier_value(p, &x, mu, &w).is_none() {
        return Err(Error::Infeasible("barrier start point is not strictly feasible".into()));
    }
    let m = p.constraint_values(&x).map_or(0, |c| c.len()) as f64;
    let mut newton_steps = 0;
    let mut history = Vec::new();
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        for _ in 0..opts.max_inner_newton {
            let (g0, h0) = p.objective_derivs(&x)?;
            let cons = p.constraint_derivs(&x)?;
            let mut g = g0;
            let mut h = h0;
            if let Some(w) = &w {
                g += w * mu;
            }
            for c in &cons {
                g -= &c.grad * (mu / c.value);
                h += (&c.grad * c.grad.transpose()) * (mu / (c.value * c.value));
                if let Some(ch) = &c.hess {
                    h -= ch * (mu / c.value);
                }
            }
            let Some(d) = newton_direction(h, &g) else { break };
            let slope = g.dot(&d);
            if !(slope < 0.0) {
                break;
            }
            let f_x = barrier_value(p, &x, mu, &w).unwrap_or(f64::INFINITY);
            if -slope / 2.0 <= 1e-12 * (1.0 + f_x.abs()) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-18 {
                let trial = &x + &d * t;
                if let Some(f_t) = barrier_value(p, &trial, mu, &w) {
                    if f_t <= f_x + opts.armijo_slope * t * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                t *= opts.backtrack;
            }
            let Some(next) = accepted else { break };
            x = next;
            newton_steps += 1;
        }
        history.push(p.objective(&x)?);
        let f = history.last().copied().unwrap_or(0.0);
        if m * mu <= 1e-11 * (1.0 + f.abs()) {
            break;
        }
        mu *= opts.barrier_shrink;
    }
    let duals = p
        .constraint_values(&x)
        .ok_or_else(|| Error::Convergence("barrier iterate left the domain".into()))?
        .iter()
        .map(|c| mu / c)
        .collect();
    Ok(BarrierResult { x, mu, duals, outer_iterations: outer, newton_steps, history })
}

pub(crate) struct PolishResult {
    pub x: DVector<f64>,
    /// Multiplier of every constraint; zero for inactive ones.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// Solve `[K −Jᵀ; J 0] [dx; dy] = −[r_x; r_c]`, falling back to least squares.
fn solve_kkt_system(k: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(sol) = k.clone().lu().solve(&rhs) {
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let svd = k.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(&rhs, eps).ok()
}

/// Newton iteration on the KKT system of a fixed active set.
fn polish_active<P: SmoothProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    y0: &[f64],
    active: &[usize],
) -> Option<(DVector<f64>, Vec<f64>, usize)> {
    let n = p.dim();
    let a = active.len();
    let mut x = x0.clone();
    let mut y: Vec<f64> = active.iter().map(|&k| y0[k]).collect();
    let mut prev = f64::INFINITY;
    for it in 0..40 {
        let (g0, h0) = p.objective_derivs(&x).ok()?;
        let cons = p.constraint_derivs(&x).ok()?;
        let mut rx = g0;
        let mut hl = h0;
        let mut kmat = DMatrix::zeros(n + a, n + a);
        let mut rhs = DVector::zeros(n + a);
        for (slot, &k) in active.iter().enumerate() {
            let c = &cons[k];
            rx -= &c.grad * y[slot];
            if let Some(ch) = &c.hess {
                hl -= ch * y[slot];
            }
            for i in 0..n {
                kmat[(i, n + slot)] = -c.grad[i];
                kmat[(n + slot, i)] = c.grad[i];
            }
            rhs[n + slot] = -c.value;
        }
        let res = rx.amax().max(active.iter().map(|&k| cons[k].value.abs()).fold(0.0, f64::max));
        if res == 0.0 || (it > 0 && res >= prev && res < 1e-9) {
            return Some((x, y, it));
        }
        if it > 0 && res > 10.0 * prev {
            return None;
        }
        prev = res;
        kmat.view_mut((0, 0), (n, n)).copy_from(&hl);
        rhs.rows_mut(0, n).copy_from(&(-rx));
        let step = solve_kkt_system(kmat, rhs)?;
        x += step.rows(0, n);
        for (slot, yv) in y.iter_mut().enumerate() {
            *yv += step[n + slot];
        }
        p.constraint_values(&x)?;
    }
    (prev < 1e-8).then_some((x, y, 40))
}

/// Active-set refinement of a barrier solution. Returns `None` if no active
/// set consistent with the KKT conditions is found.
pub(crate) fn polish<P: SmoothProblem + ?Sized>(p: &P, start: &BarrierResult, forced: &[usize]) -> Option<PolishResult> {
    let cs = p.constraint_values(&start.x)?;
    let m = cs.len();
    // c·y = μ on the central path; compare c and y in their own scales so
    // that small multipliers do not hide active constraints
    let y_max = start.duals.iter().fold(start.mu.sqrt(), |m, v| m.max(v.abs()));
    let x_max = start.x.amax().max(1.0);
    let mut active: Vec<usize> = (0..m)
        .filter(|&k| {
            forced.contains(&k)
                || cs[k] <= 0.0
                || cs[k] * cs[k] < start.mu
                || (y_max > 0.0 && cs[k] * y_max < start.duals.get(k).copied().unwrap_or(0.0) * x_max)
        })
        .collect();
    let mut total = 0;
    for _ in 0..(2 * m + 2) {
        let (x, y, iters) = polish_active(p, &start.x, &start.duals, &active)?;
        total += iters;
        let vals = p.constraint_values(&x)?;
        let scale = 1.0 + x.amax();
        let violated = (0..m)
            .filter(|k| !active.contains(k))
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .filter(|&k| vals[k] < -1e-12 * scale);
        if let Some(k) = violated {
            active.push(k);
            active.sort_unstable();
            continue;
        }
        let negative = active
            .iter()
            .enumerate()
            .filter(|(_, k)| !forced.contains(*k))
            .min_by(|a, b| y[a.0].total_cmp(&y[b.0]))
            .filter(|(slot, _)| y[*slot] < -1e-10 * (1.0 + y.iter().fold(0.0_f64, |m, v| m.max(v.abs()))));
        if let Some((slot, _)) = negative {
            active.remove(slot);
            continue;
        }
        let mut duals = vec![0.0; m];
        for (slot, &k) in active.iter().enumerate() {
            duals[k] = y[slot].max(0.0);
        }
        return Some(PolishResult { x, duals, iterations: total });
    }
    None
}

/// Central-difference Hessian of a gradient oracle, symmetrized and projected
/// onto the negative semidefinite cone (the oracle belongs to a concave map).
pub(crate) fn fd_concave_hessian(
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
    z: &[f64],
) -> Result<DMatrix<f64>> {
    let n = z.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = 1e-5 * z[j].abs().max(1.0);
        let mut up = z.to_vec();
        let mut dn = z.to_vec();
        up[j] += step;
        dn[j] -= step;
        let (gu, gd) = (grad(&up)?, grad(&dn)?);
        for i in 0..n {
            h[(i, j)] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.min(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())
}
