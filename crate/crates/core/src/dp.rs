//! Backward-induction kernels shared by the tree and lattice engines.
//!
//! Every kernel walks the time slices of a `DagCore` backwards and composes
//! node values with the one-step certainty-equivalent solve under a supplied
//! edge-weight vector (physical, tilted or martingale weights all use the
//! same storage layout). Nodes within a slice are independent, so wide
//! slices are solved in parallel; each node's reduction order is fixed, so
//! results do not depend on the schedule.

use rayon::prelude::*;

use crate::dag::DagCore;
use crate::error::{Result, SolverError};
use crate::onestep::{ce_value, logsumexp, one_step_ce};

/// Slices at least this wide are solved with rayon.
const PAR_THRESHOLD: usize = 4096;

struct Scratch {
    vals: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch { vals: Vec::with_capacity(8) }
    }
}

#[inline]
fn node_ce(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    node: usize,
    values: &[f64],
    scratch: &mut Scratch,
) -> Result<f64> {
    let r = core.edge_range(node);
    scratch.vals.clear();
    for e in r.clone() {
        scratch.vals.push(values[core.edge_child[e] as usize]);
    }
    let d = core.asset_dim();
    ce_value(
        &weights[r.clone()],
        &core.edge_incr[r.start * d..r.end * d],
        d,
        &scratch.vals,
        alpha,
    )
    .map_err(|err| match err {
        SolverError::Arbitrage { .. } => SolverError::Arbitrage { node: Some(node) },
        other => other,
    })
}

fn backward<F>(core: &DagCore, weights: &[f64], alpha: f64, init: Vec<f64>, combine: F) -> Result<Vec<f64>>
where
    F: Fn(usize, Option<f64>, &[f64]) -> f64 + Sync,
{
    let mut values = init;
    // Terminal slice first.
    {
        let snapshot = values.clone();
        for v in core.terminal_slice() {
            values[v] = combine(v, None, &snapshot);
        }
    }
    for k in (0..core.steps()).rev() {
        let slice = core.slice(k);
        if slice.len() >= PAR_THRESHOLD {
            let snapshot = &values;
            let solved: Result<Vec<(usize, f64)>> = slice
                .clone()
                .into_par_iter()
                .map_init(Scratch::new, |scratch, v| {
                    let ce = node_ce(core, weights, alpha, v, snapshot, scratch)?;
                    Ok((v, combine(v, Some(ce), snapshot)))
                })
                .collect();
            for (v, val) in solved? {
                values[v] = val;
            }
        } else {
            let mut scratch = Scratch::new();
            for v in slice {
                let ce = node_ce(core, weights, alpha, v, &values, &mut scratch)?;
                values[v] = combine(v, Some(ce), &values);
            }
        }
    }
    Ok(values)
}

/// Indifference-style value process of a terminal claim: terminal values are
/// the claim, earlier nodes the one-step certainty equivalent of their
/// children under `weights`.
pub fn european_values(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    terminal: &[f64],
) -> Result<Vec<f64>> {
    let ts = core.terminal_slice();
    if terminal.len() != ts.len() {
        return Err(SolverError::Mismatch(format!(
            "terminal claim has {} values for {} terminal nodes",
            terminal.len(),
            ts.len()
        )));
    }
    let mut init = vec![0.0; core.n_nodes()];
    for (i, v) in ts.enumerate() {
        init[v] = terminal[i];
    }
    backward(core, weights, alpha, init, |v, ce, vals| ce.unwrap_or(vals[v]))
}

/// Value process of a claim that settles at the first marked node: the value
/// is `settle[v]` there and the certainty equivalent of the children
/// elsewhere. Every terminal node must be marked.
pub fn absorbed_values(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    marks: &[bool],
    settle: &[f64],
) -> Result<Vec<f64>> {
    if core.terminal_slice().any(|v| !marks[v]) {
        return Err(SolverError::Mismatch("absorbing marks must cover the terminal slice".into()));
    }
    let init = vec![0.0; core.n_nodes()];
    backward(core, weights, alpha, init, |v, ce, _| {
        if marks[v] {
            settle[v]
        } else {
            ce.expect("non-terminal node")
        }
    })
}

/// Snell recursion: `V = max(running, one-step CE of V)` with terminal value
/// `running`; nodes marked in `absorb` are frozen at `freeze[v]` instead
/// (used when a counter-party rule terminates the game there).
pub fn snell_values(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    running: &[f64],
    absorb: Option<(&[bool], &[f64])>,
) -> Result<Vec<f64>> {
    let init = vec![0.0; core.n_nodes()];
    backward(core, weights, alpha, init, |v, ce, _| {
        if let Some((marks, freeze)) = absorb {
            if marks[v] {
                return freeze[v];
            }
        }
        match ce {
            None => running[v],
            Some(c) => running[v].max(c),
        }
    })
}

/// Linear conditional-expectation process of a terminal payoff.
pub fn expectation_values(core: &DagCore, weights: &[f64], terminal: &[f64]) -> Vec<f64> {
    let ts = core.terminal_slice();
    let mut values = vec![0.0; core.n_nodes()];
    for (i, v) in ts.enumerate() {
        values[v] = terminal[i];
    }
    for k in (0..core.steps()).rev() {
        for v in core.slice(k) {
            let mut s = 0.0;
            for e in core.edge_range(v) {
                s += weights[e] * values[core.edge_child[e] as usize];
            }
            values[v] = s;
        }
    }
    values
}

/// Entropy-minimizing martingale weights relative to `base` edge weights.
///
/// Backward program: at each node the one-step relative-entropy problem with
/// continuation costs `j_child` is the unit-risk-aversion certainty
/// equivalent; its dual weights are the minimizing transition measure and
/// the root cost is the total relative entropy (in nats).
pub fn emmm_weights(core: &DagCore, base: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut j = vec![0.0; core.n_nodes()];
    let mut q = vec![0.0; core.n_edges()];
    let d = core.asset_dim();
    let mut vals = Vec::with_capacity(8);
    for k in (0..core.steps()).rev() {
        for v in core.slice(k) {
            let r = core.edge_range(v);
            vals.clear();
            for e in r.clone() {
                vals.push(j[core.edge_child[e] as usize]);
            }
            let sol = one_step_ce(
                &base[r.clone()],
                &core.edge_incr[r.start * d..r.end * d],
                d,
                &vals,
                1.0,
            )
            .map_err(|err| match err {
                SolverError::Arbitrage { .. } => SolverError::Arbitrage { node: Some(v) },
                other => other,
            })?;
            j[v] = sol.certainty_equivalent;
            q[r].copy_from_slice(&sol.dual_weights);
        }
    }
    Ok((q, j))
}

/// Max over nodes of the log-domain violation of the supermartingale
/// inequality `U_t <= E_t[U_{t+1}]` for `U = exp(-alpha * ce)`; a
/// nonpositive result (up to rounding) certifies the inequality.
pub fn supermartingale_violation(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    ce_process: &[f64],
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let mut terms = Vec::with_capacity(8);
    for k in 0..core.steps() {
        for v in core.slice(k) {
            terms.clear();
            for e in core.edge_range(v) {
                terms.push(weights[e].ln() - alpha * ce_process[core.edge_child[e] as usize]);
            }
            let rhs = logsumexp(&terms);
            worst = worst.max(-alpha * ce_process[v] - rhs);
        }
    }
    worst
}
