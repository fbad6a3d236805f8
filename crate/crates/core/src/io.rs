//! Deterministic CSV and report emission. All floating-point output uses 17
//! significant digits so reruns are byte-identical.

use std::fmt::Write as _;

use crate::dynkin::{NashResult, NepReport};
use crate::error::{Result, SolverError};
use crate::indifference::Valuer;
use crate::lattice::{Lattice, LatticeNashResult};
use crate::onestep::one_step_ce;
use crate::snell::SnellResult;
use crate::tree::{AdaptedProcess, EventTree, StoppingRule};

/// 17 significant digits, deterministic.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// FNV-1a over the canonical stop set; stable across runs and platforms.
pub fn rule_hash(stops: &[usize]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &s in stops {
        for b in (s as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}

/// Value-process CSV: `node,time,value`.
pub fn value_process_csv(tree: &EventTree, process: &AdaptedProcess) -> String {
    let mut out = String::from("node,time,value\n");
    for v in 0..tree.n_nodes() {
        let _ = writeln!(out, "{v},{},{}", fmt17(tree.time_years(v)), fmt17(process.values[v]));
    }
    out
}

/// Envelope CSV: `node,time,payoff,envelope,stop`.
pub fn snell_csv(tree: &EventTree, payoff: &AdaptedProcess, result: &SnellResult) -> String {
    let mut out = String::from("node,time,payoff,envelope,stop\n");
    for v in 0..tree.n_nodes() {
        let _ = writeln!(
            out,
            "{v},{},{},{},{}",
            fmt17(tree.time_years(v)),
            fmt17(payoff.values[v]),
            fmt17(result.envelope.values[v]),
            u8::from(result.optimal_rule.stop[v]),
        );
    }
    out
}

/// Iteration trace CSV: `iter,player,rule_hash,value`.
pub fn trace_csv(tree: &EventTree, result: &NashResult) -> String {
    let mut out = String::from("iter,player,rule_hash,value\n");
    for e in &result.trace {
        let _ = writeln!(
            out,
            "{},buyer,{},{}",
            e.round,
            rule_hash(&e.buyer_rule.canonical_stops(tree)),
            fmt17(e.j_buyer)
        );
        let _ = writeln!(
            out,
            "{},seller,{},{}",
            e.round,
            rule_hash(&e.seller_rule.canonical_stops(tree)),
            fmt17(e.j_seller)
        );
    }
    out
}

/// Lattice iteration trace CSV (same columns; stops hashed over node ids).
pub fn lattice_trace_csv(result: &LatticeNashResult) -> String {
    let mut out = String::from("iter,player,rule_hash,value\n");
    for e in &result.trace {
        let _ = writeln!(out, "{},buyer,{},{}", e.round, rule_hash(&e.buyer_stops), fmt17(e.j_buyer));
        let _ =
            writeln!(out, "{},seller,{},{}", e.round, rule_hash(&e.seller_stops), fmt17(e.j_seller));
    }
    out
}

/// Equilibrium report JSON for the tree engine: rules as node-id lists.
pub fn equilibrium_report_tree(
    tree: &EventTree,
    result: &NashResult,
    report: &NepReport,
) -> serde_json::Value {
    serde_json::json!({
        "engine": "tree",
        "converged": result.converged,
        "rounds": result.trace.len(),
        "buyer_stops": result.buyer_rule.canonical_stops(tree),
        "seller_stops": result.seller_rule.canonical_stops(tree),
        "j_buyer": result.j_buyer,
        "j_seller": result.j_seller,
        "buyer_gap": report.buyer_gap,
        "seller_gap": report.seller_gap,
        "verified": report.passed(),
    })
}

/// Equilibrium report JSON for the lattice engine: rules as (time, level)
/// pairs.
pub fn equilibrium_report_lattice(
    lat: &Lattice,
    result: &LatticeNashResult,
    report: &NepReport,
) -> serde_json::Value {
    let coords = |stops: &[usize]| -> Vec<[usize; 2]> {
        stops
            .iter()
            .map(|&v| {
                let (t, j) = lat.coords(v);
                [t, j]
            })
            .collect()
    };
    serde_json::json!({
        "engine": "lattice",
        "converged": result.converged,
        "rounds": result.trace.len(),
        "buyer_stops": coords(&result.buyer_rule.effective_stops(lat)),
        "seller_stops": coords(&result.seller_rule.effective_stops(lat)),
        "j_buyer": result.j_buyer,
        "j_seller": result.j_seller,
        "buyer_gap": report.buyer_gap,
        "seller_gap": report.seller_gap,
        "verified": report.passed(),
    })
}

/// Rules parsed back from a report (or a bare rules file).
pub fn rules_from_report(tree: &EventTree, json: &serde_json::Value) -> Result<(StoppingRule, StoppingRule)> {
    let pick = |key: &str| -> Result<StoppingRule> {
        let arr = json
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| SolverError::InvalidModel(format!("report lacks {key}")))?;
        let mut marks = Vec::with_capacity(arr.len());
        for e in arr {
            let id = e
                .as_u64()
                .ok_or_else(|| SolverError::InvalidModel(format!("{key} holds a non-integer")))?
                as usize;
            if id >= tree.n_nodes() {
                return Err(SolverError::InvalidModel(format!("{key}: node {id} out of range")));
            }
            marks.push(id);
        }
        Ok(StoppingRule::from_marks(tree, marks))
    };
    Ok((pick("buyer_stops")?, pick("seller_stops")?))
}

/// Per-node diagnostics of the pricing measure: multiplier, optimal holding
/// and minimizing weights of each one-step solve, as a rectangular CSV.
pub fn pricing_diagnostics_csv(tree: &EventTree, valuer: &Valuer) -> Result<String> {
    let core = tree.core();
    let d = tree.asset_dim();
    let base = &valuer.tilted_weights().weights;
    let (_, j) = crate::dp::emmm_weights(core, base)?;
    let max_children = (0..tree.n_nodes()).map(|v| core.n_children(v)).max().unwrap_or(0);
    let mut out = String::from("node,time");
    for a in 0..d {
        let _ = write!(out, ",lambda_{a}");
    }
    for a in 0..d {
        let _ = write!(out, ",theta_{a}");
    }
    for c in 0..max_children {
        let _ = write!(out, ",w_{c}");
    }
    out.push('\n');
    let mut vals = Vec::new();
    for k in 0..tree.steps() {
        for v in tree.slice(k) {
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
            )?;
            let _ = write!(out, "{v},{}", fmt17(tree.time_years(v)));
            // entropy-problem multiplier is the negated unit-risk holding
            for a in 0..d {
                let _ = write!(out, ",{}", fmt17(-sol.optimal_holding[a]));
            }
            for a in 0..d {
                let _ = write!(out, ",{}", fmt17(sol.optimal_holding[a]));
            }
            for c in 0..max_children {
                if c < sol.dual_weights.len() {
                    let _ = write!(out, ",{}", fmt17(sol.dual_weights[c]));
                } else {
                    out.push(',');
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}
