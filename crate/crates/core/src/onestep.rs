//! One-step exponential-utility primitives.
//!
//! At a single node with child probabilities `p_i`, traded increments
//! `dS_i` and continuation values `v_i`, the certainty equivalent of an
//! agent with risk aversion `alpha` is
//!
//!   CE = -(1/alpha) * log min_theta sum_i p_i exp(-alpha (v_i + theta . dS_i))
//!
//! The inner problem is a smooth strictly convex minimization. It has a
//! closed form for a complete step (one asset, two children) and is solved
//! by a safeguarded Newton iteration otherwise. Everything is evaluated in
//! log space so bounded inputs can never overflow.

use crate::error::{Result, SolverError};

/// Relative tolerance on the dual-weight martingale residual
/// `|sum_i w_i dS_i| <= GRAD_TOL * max(1, max|dS|)`.
pub const GRAD_TOL: f64 = 1e-13;

const MAX_NEWTON_ITERS: usize = 200;

/// Solution of the one-step convex program.
#[derive(Debug, Clone)]
pub struct OneStepSolution {
    pub certainty_equivalent: f64,
    /// Optimal holding per asset (minimum-norm representative when the
    /// increments are degenerate).
    pub optimal_holding: Vec<f64>,
    /// Minimizing one-step measure: `w_i` proportional to
    /// `p_i exp(-alpha (v_i + theta* . dS_i))`, a martingale weight vector.
    pub dual_weights: Vec<f64>,
}

/// log(sum exp(a_i)) with max-shift; -inf for an empty slice.
pub fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|a| (a - m).exp()).sum();
    m + s.ln()
}

/// True iff zero lies in the relative interior of the convex hull of the
/// increment vectors (`d = 0` counts as true).
pub fn zero_in_hull_interior(increments: &[f64], d: usize) -> bool {
    if d == 0 {
        return true;
    }
    let n = increments.len() / d;
    if n == 0 {
        return false;
    }
    let scale = increments.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return true; // hull is {0}
    }
    if d == 1 {
        let min = increments.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = increments.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return min < 0.0 && max > 0.0;
    }
    // General d: the tilt problem min_theta log sum_i exp(theta . v_i) has a
    // bounded minimizer exactly when zero is in the relative interior.
    let probs = vec![1.0 / n as f64; n];
    let values = vec![0.0; n];
    solve_multi(&probs, increments, d, &values, 1.0).is_ok()
}

/// Solves the one-step certainty-equivalent problem.
///
/// `increments` is flattened with stride `d`; `d = 0` means no traded asset.
pub fn one_step_ce(
    probs: &[f64],
    increments: &[f64],
    d: usize,
    values: &[f64],
    alpha: f64,
) -> Result<OneStepSolution> {
    let n = probs.len();
    if n == 0 || values.len() != n || increments.len() != n * d {
        return Err(SolverError::Mismatch(format!(
            "one-step inputs disagree: {} probs, {} values, {} increments (d={})",
            n,
            values.len(),
            increments.len(),
            d
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(SolverError::Mismatch(format!("risk aversion must be positive, got {alpha}")));
    }
    if values.iter().any(|v| !v.is_finite()) || probs.iter().any(|p| !(*p > 0.0) || !p.is_finite())
    {
        return Err(SolverError::Mismatch(
            "one-step probabilities must be positive and values finite".into(),
        ));
    }

    let theta = solve_holding(probs, increments, d, values, alpha)?;
    let mut logits: Vec<f64> = (0..n)
        .map(|i| probs[i].ln() - alpha * (values[i] + dot(&theta, incr(increments, d, i))))
        .collect();
    let lse = logsumexp(&logits);
    for a in logits.iter_mut() {
        *a = (*a - lse).exp();
    }
    Ok(OneStepSolution {
        certainty_equivalent: -lse / alpha,
        optimal_holding: theta,
        dual_weights: logits,
    })
}

/// Certainty equivalent only (no allocation of the dual data beyond the
/// holding); used by the dynamic-programming kernels.
pub fn ce_value(probs: &[f64], increments: &[f64], d: usize, values: &[f64], alpha: f64) -> Result<f64> {
    let theta = solve_holding(probs, increments, d, values, alpha)?;
    let n = probs.len();
    let terms: Vec<f64> = (0..n)
        .map(|i| probs[i].ln() - alpha * (values[i] + dot(&theta, incr(increments, d, i))))
        .collect();
    Ok(-logsumexp(&terms) / alpha)
}

fn incr<'a>(increments: &'a [f64], d: usize, i: usize) -> &'a [f64] {
    &increments[i * d..(i + 1) * d]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Optimal holding for the one-step problem; the zero vector when `d = 0`
/// or the increments are all zero.
pub fn solve_holding(
    probs: &[f64],
    increments: &[f64],
    d: usize,
    values: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Ok(vec![]);
    }
    let scale = increments.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; d]);
    }
    if d == 1 {
        if probs.len() == 2 {
            return solve_complete_step(probs, increments, values, alpha);
        }
        return solve_scalar(probs, increments, values, alpha).map(|t| vec![t]);
    }
    solve_multi(probs, increments, d, values, alpha)
}

/// Closed form for one asset and two children (a complete one-step market).
///
/// The first-order condition pins `theta*` directly, and the certainty
/// equivalent collapses to the unique martingale weights.
fn solve_complete_step(probs: &[f64], incs: &[f64], values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let (a, b) = (incs[0], incs[1]);
    if !(a.min(b) < 0.0 && a.max(b) > 0.0) {
        return Err(SolverError::Arbitrage { node: None });
    }
    // p0 a e^{-alpha(v0 + theta a)} + p1 b e^{-alpha(v1 + theta b)} = 0
    let log_ratio = (-probs[1] * b).ln() - (probs[0] * a).ln();
    let theta = (-log_ratio - alpha * (values[0] - values[1])) / (alpha * (a - b));
    Ok(vec![theta])
}

/// Safeguarded Newton for one asset and any number of children. The dual
/// mean g(theta) = sum w_i(theta) dS_i is strictly decreasing with opposite
/// signs at the ends of an expanding bracket, so bisection backstops Newton.
fn solve_scalar(probs: &[f64], incs: &[f64], values: &[f64], alpha: f64) -> Result<f64> {
    let min = incs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = incs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min < 0.0 && max > 0.0) {
        return Err(SolverError::Arbitrage { node: None });
    }
    let scale = max.max(-min);
    let tol = GRAD_TOL * scale.max(1.0);
    let n = probs.len();
    let mut terms = vec![0.0; n];

    // g(theta) and Var_w(dS) at theta
    let eval = |theta: f64, terms: &mut [f64]| -> (f64, f64) {
        for i in 0..n {
            terms[i] = probs[i].ln() - alpha * (values[i] + theta * incs[i]);
        }
        let lse = logsumexp(terms);
        let mut mean = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let w = (terms[i] - lse).exp();
            mean += w * incs[i];
            sq += w * incs[i] * incs[i];
        }
        (mean, (sq - mean * mean).max(0.0))
    };

    let mut theta = 0.0;
    let (mut g, mut var) = eval(theta, &mut terms);
    // Expand a bracket [lo, hi] with g(lo) > 0 > g(hi).
    let mut step = 1.0 / (alpha * scale);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    if g > 0.0 {
        lo = theta;
    } else {
        hi = theta;
    }
    let mut guard = 0;
    while lo == f64::NEG_INFINITY || hi == f64::INFINITY {
        guard += 1;
        if guard > 200 {
            return Err(SolverError::Arbitrage { node: None });
        }
        let probe = if hi == f64::INFINITY { lo + step } else { hi - step };
        let (gp, _) = eval(probe, &mut terms);
        if gp > 0.0 {
            lo = lo.max(probe);
        } else {
            hi = hi.min(probe);
        }
        step *= 2.0;
    }

    for _ in 0..MAX_NEWTON_ITERS {
        if g.abs() <= tol {
            return Ok(theta);
        }
        if g > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        // phi'' = alpha^2 var; Newton step on phi' = -alpha g
        let mut next = if var > 0.0 { theta + g / (alpha * var) } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        theta = next;
        let e = eval(theta, &mut terms);
        g = e.0;
        var = e.1;
        if hi - lo <= f64::EPSILON * (1.0 + theta.abs()) {
            return Ok(theta);
        }
    }
    if g.abs() <= tol * 10.0 {
        return Ok(theta);
    }
    Err(SolverError::Numeric(format!(
        "one-step Newton stalled: residual {g:.3e} above tolerance {tol:.3e}"
    )))
}

/// Damped Newton with a small ridge for several assets. The ridge keeps the
/// step inside the span of the increments, which resolves degenerate
/// directions to the minimum-norm holding.
fn solve_multi(
    probs: &[f64],
    increments: &[f64],
    d: usize,
    values: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = probs.len();
    let scale = increments.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = GRAD_TOL * scale.max(1.0);
    let theta_cap = 1e6 / (alpha * scale.max(1e-300));

    let mut theta = vec![0.0; d];
    let mut terms = vec![0.0; n];
    let mut weights = vec![0.0; n];

    let objective = |theta: &[f64], terms: &mut [f64]| -> f64 {
        for i in 0..n {
            terms[i] = probs[i].ln() - alpha * (values[i] + dot(theta, incr(increments, d, i)));
        }
        logsumexp(terms)
    };

    let mut f = objective(&theta, &mut terms);
    for _ in 0..MAX_NEWTON_ITERS {
        let lse = f;
        for i in 0..n {
            weights[i] = (terms[i] - lse).exp();
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let xi = incr(increments, d, i);
            for k in 0..d {
                mean[k] += weights[i] * xi[k];
            }
        }
        let gnorm = mean.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm <= tol {
            project_onto_increment_span(&mut theta, increments, d, n);
            return Ok(theta);
        }
        // Covariance of the increments under the current weights.
        let mut cov = vec![0.0; d * d];
        for i in 0..n {
            let xi = incr(increments, d, i);
            for r in 0..d {
                for c in 0..d {
                    cov[r * d + c] += weights[i] * (xi[r] - mean[r]) * (xi[c] - mean[c]);
                }
            }
        }
        let ridge = 1e-12 * scale * scale + 1e-300;
        for r in 0..d {
            cov[r * d + r] += ridge;
        }
        // Solve cov * step = mean / alpha.
        let rhs: Vec<f64> = mean.iter().map(|g| g / alpha).collect();
        let step = solve_spd(&mut cov, &rhs, d).ok_or_else(|| {
            SolverError::Numeric("one-step Hessian factorization failed".into())
        })?;

        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fc = objective(&cand, &mut terms);
            if fc <= f {
                theta = cand;
                f = fc;
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced {
            // No descent direction left: gradient already at numerical floor.
            let _ = objective(&theta, &mut terms);
            if gnorm <= tol * 100.0 {
                project_onto_increment_span(&mut theta, increments, d, n);
                return Ok(theta);
            }
            return Err(SolverError::Numeric(format!(
                "one-step Newton stalled: residual {gnorm:.3e} above tolerance {tol:.3e}"
            )));
        }
        if theta.iter().any(|x| x.abs() > theta_cap) {
            return Err(SolverError::Arbitrage { node: None });
        }
    }
    Err(SolverError::Numeric("one-step Newton exceeded the iteration cap".into()))
}

/// Removes the component of `theta` orthogonal to the span of the increment
/// vectors. The objective is flat in those directions, so this picks the
/// minimum-norm optimizer.
fn project_onto_increment_span(theta: &mut [f64], increments: &[f64], d: usize, n: usize) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut v = incr(increments, d, i).to_vec();
        for b in &basis {
            let c = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let norm = dot(&v, &v).sqrt();
        let scale = incr(increments, d, i).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm > 1e-12 * scale.max(1.0) {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
            if basis.len() == d {
                return; // full rank: nothing to project away
            }
        }
    }
    let mut projected = vec![0.0; d];
    for b in &basis {
        let c = dot(theta, b);
        for (p, y) in projected.iter_mut().zip(b) {
            *p += c * y;
        }
    }
    theta.copy_from_slice(&projected);
}

/// Gaussian elimination with partial pivoting for the small SPD systems of
/// the multivariate Newton step.
fn solve_spd(a: &mut [f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..d {
        let mut piv = col;
        for r in col + 1..d {
            if a[r * d + col].abs() > a[piv * d + col].abs() {
                piv = r;
            }
        }
        if a[piv * d + col] == 0.0 {
            return None;
        }
        if piv != col {
            for c in 0..d {
                a.swap(col * d + c, piv * d + c);
            }
            x.swap(col, piv);
        }
        let diag = a[col * d + col];
        for r in col + 1..d {
            let f = a[r * d + col] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..d {
                a[r * d + c] -= f * a[col * d + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..d).rev() {
        let mut s = x[col];
        for c in col + 1..d {
            s -= a[col * d + c] * x[c];
        }
        x[col] = s / a[col * d + col];
    }
    Some(x)
}
