//! Finite event trees, adapted processes and stopping rules.
//!
//! An `EventTree` is a filtered finite probability space: nodes grouped by
//! time index, one parent per node, per-edge transition probabilities and
//! traded-asset increments. Trees are immutable after construction and every
//! operation on them is a pure function.

use crate::dag::DagCore;
use crate::error::{Result, SolverError};
use crate::onestep::zero_in_hull_interior;

/// Default cap on non-terminal nodes for exhaustive rule enumeration.
pub const DEFAULT_ENUM_CAP: usize = 16;

/// Hard ceiling on explicit tree size; larger models belong on the
/// recombining lattice engine.
const MAX_NODES: usize = 8_000_000;

pub const NO_NODE: u32 = u32::MAX;

/// Finite event tree over a time grid `0..=steps` mapped to `[0, T]` years.
#[derive(Debug, Clone)]
pub struct EventTree {
    pub(crate) core: DagCore,
    pub(crate) parent: Vec<u32>,
    horizon_years: f64,
}

impl EventTree {
    pub fn core(&self) -> &DagCore {
        &self.core
    }

    pub fn n_nodes(&self) -> usize {
        self.core.n_nodes()
    }

    pub fn steps(&self) -> usize {
        self.core.steps()
    }

    pub fn horizon_years(&self) -> f64 {
        self.horizon_years
    }

    pub fn asset_dim(&self) -> usize {
        self.core.asset_dim()
    }

    pub fn time_of(&self, node: usize) -> usize {
        self.core.time_of(node)
    }

    pub fn time_years(&self, node: usize) -> f64 {
        self.time_of(node) as f64 * self.horizon_years / self.steps() as f64
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        match self.parent[node] {
            NO_NODE => None,
            p => Some(p as usize),
        }
    }

    pub fn slice(&self, k: usize) -> std::ops::Range<usize> {
        self.core.slice(k)
    }

    pub fn terminal_range(&self) -> std::ops::Range<usize> {
        self.core.terminal_slice()
    }

    pub fn n_terminals(&self) -> usize {
        self.terminal_range().len()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.core.is_terminal(node)
    }

    pub fn n_non_terminal(&self) -> usize {
        self.n_nodes() - self.n_terminals()
    }

    /// Terminal position (0-based within the terminal slice) of a terminal node.
    pub fn terminal_index(&self, node: usize) -> usize {
        node - self.terminal_range().start
    }

    /// Probability of reaching each node under the physical transition weights.
    pub fn node_probabilities(&self) -> Vec<f64> {
        self.core.node_mass(&self.core.edge_prob)
    }

    /// Builds a tree from per-node data. Nodes must be listed in
    /// nondecreasing time order with the root first; children keep the
    /// listed order. `in_prob[i]` and `in_incr[i]` describe the edge from
    /// `parent[i]` into node `i`.
    pub fn from_parts(
        times: &[usize],
        parents: &[Option<usize>],
        in_prob: &[f64],
        in_incr: &[Vec<f64>],
        asset_dim: usize,
        horizon_years: f64,
    ) -> Result<Self> {
        let tree = Self::from_parts_unchecked(times, parents, in_prob, in_incr, asset_dim, horizon_years)?;
        let report = validate_tree(&tree);
        if let Some(v) = report.violations.first() {
            return Err(SolverError::InvalidModel(format!(
                "node {}: {}",
                v.node, v.message
            )));
        }
        Ok(tree)
    }

    /// Structural assembly without probability or arbitrage validation.
    /// Intended for diagnostics; solvers assume a validated tree.
    pub fn from_parts_unchecked(
        times: &[usize],
        parents: &[Option<usize>],
        in_prob: &[f64],
        in_incr: &[Vec<f64>],
        asset_dim: usize,
        horizon_years: f64,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 || parents.len() != n || in_prob.len() != n || in_incr.len() != n {
            return Err(SolverError::InvalidModel("empty or ragged node arrays".into()));
        }
        if n > MAX_NODES {
            return Err(SolverError::InvalidModel(format!(
                "tree has {n} nodes, above the explicit-tree ceiling {MAX_NODES}; use the lattice engine"
            )));
        }
        if !(horizon_years > 0.0) {
            return Err(SolverError::InvalidModel("horizon must be positive".into()));
        }
        let steps = *times.iter().max().unwrap();
        if times[0] != 0 || parents[0].is_some() {
            return Err(SolverError::InvalidModel("first node must be the time-0 root".into()));
        }
        let mut slices = Vec::with_capacity(steps + 1);
        let mut at = 0usize;
        for k in 0..=steps {
            let start = at;
            while at < n && times[at] == k {
                at += 1;
            }
            if at == start {
                return Err(SolverError::InvalidModel(format!("no nodes at time {k}")));
            }
            slices.push(start..at);
        }
        if at != n {
            return Err(SolverError::InvalidModel(
                "nodes are not sorted by nondecreasing time".into(),
            ));
        }
        // Count children, then fill CSR in listed order.
        let mut n_children = vec![0u32; n];
        for i in 1..n {
            let p = parents[i].ok_or_else(|| {
                SolverError::InvalidModel(format!("node {i} at time {} has no parent", times[i]))
            })?;
            if p >= n || times[p] + 1 != times[i] {
                return Err(SolverError::InvalidModel(format!(
                    "node {i}: parent {p} is not one step earlier"
                )));
            }
            n_children[p] += 1;
        }
        for (i, &c) in n_children.iter().enumerate() {
            let terminal = times[i] == steps;
            if terminal && c > 0 {
                return Err(SolverError::InvalidModel(format!("terminal node {i} has children")));
            }
            if !terminal && c == 0 {
                return Err(SolverError::InvalidModel(format!(
                    "node {i} at time {} is childless before the horizon",
                    times[i]
                )));
            }
        }
        let mut edge_start = vec![0u32; n + 1];
        for i in 0..n {
            edge_start[i + 1] = edge_start[i] + n_children[i];
        }
        let n_edges = edge_start[n] as usize;
        let mut edge_child = vec![0u32; n_edges];
        let mut edge_prob = vec![0.0; n_edges];
        let mut edge_incr = vec![0.0; n_edges * asset_dim];
        let mut fill = edge_start.clone();
        let mut parent_vec = vec![NO_NODE; n];
        for i in 1..n {
            let p = parents[i].unwrap();
            parent_vec[i] = p as u32;
            let e = fill[p] as usize;
            fill[p] += 1;
            edge_child[e] = i as u32;
            edge_prob[e] = in_prob[i];
            if in_incr[i].len() != asset_dim {
                return Err(SolverError::InvalidModel(format!(
                    "node {i}: expected {asset_dim} increments, got {}",
                    in_incr[i].len()
                )));
            }
            edge_incr[e * asset_dim..(e + 1) * asset_dim].copy_from_slice(&in_incr[i]);
        }
        Ok(EventTree {
            core: DagCore {
                slices,
                edge_start,
                edge_child,
                edge_prob,
                edge_incr,
                asset_dim,
            },
            parent: parent_vec,
            horizon_years,
        })
    }
}

/// Real-valued process with one value per tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    pub values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn constant(tree: &EventTree, c: f64) -> Self {
        Self { values: vec![c; tree.n_nodes()] }
    }

    pub fn from_fn(tree: &EventTree, mut f: impl FnMut(usize) -> f64) -> Self {
        Self { values: (0..tree.n_nodes()).map(&mut f).collect() }
    }

    pub fn check_on(&self, tree: &EventTree) -> Result<()> {
        if self.values.len() != tree.n_nodes() {
            return Err(SolverError::Mismatch(format!(
                "process has {} values for a {}-node tree",
                self.values.len(),
                tree.n_nodes()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Mismatch("process contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Claim paying one value per terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalClaim {
    pub values: Vec<f64>,
}

impl TerminalClaim {
    pub fn zero(tree: &EventTree) -> Self {
        Self { values: vec![0.0; tree.n_terminals()] }
    }

    pub fn constant(tree: &EventTree, c: f64) -> Self {
        Self { values: vec![c; tree.n_terminals()] }
    }

    pub fn check_on(&self, tree: &EventTree) -> Result<()> {
        if self.values.len() != tree.n_terminals() {
            return Err(SolverError::Mismatch(format!(
                "claim has {} values for {} terminal nodes",
                self.values.len(),
                tree.n_terminals()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Mismatch("claim contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Predictable holdings: one d-vector per non-terminal node, flattened with
/// stride d (rows for terminal nodes are absent).
#[derive(Debug, Clone)]
pub struct TradingStrategy {
    pub holding: Vec<f64>,
}

impl TradingStrategy {
    pub fn zero(tree: &EventTree) -> Self {
        Self { holding: vec![0.0; tree.n_non_terminal() * tree.asset_dim()] }
    }

    pub fn holding_at<'a>(&'a self, tree: &EventTree, node: usize) -> &'a [f64] {
        let d = tree.asset_dim();
        &self.holding[node * d..(node + 1) * d]
    }

    /// Accumulated trading gains from time `from` on, as a value per node
    /// (gain collected along the path so far; zero at and before `from`).
    pub fn gains_from(&self, tree: &EventTree, from: usize) -> AdaptedProcess {
        let d = tree.asset_dim();
        let mut g = vec![0.0; tree.n_nodes()];
        for k in 0..tree.steps() {
            for v in tree.slice(k) {
                let gv = g[v];
                for e in tree.core.edge_range(v) {
                    let child = tree.core.edge_child[e] as usize;
                    let mut inc = 0.0;
                    if k >= from {
                        let row = &self.holding[v * d..(v + 1) * d];
                        let ds = &tree.core.edge_incr[e * d..(e + 1) * d];
                        inc = row.iter().zip(ds).map(|(h, s)| h * s).sum();
                    }
                    g[child] = gv + inc;
                }
            }
        }
        AdaptedProcess { values: g }
    }
}

/// Stop/continue marking per node; the induced stopping time of a path is
/// its first marked node. Terminal nodes are always marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingRule {
    pub stop: Vec<bool>,
}

impl StoppingRule {
    /// Stops at the horizon only.
    pub fn at_horizon(tree: &EventTree) -> Self {
        let mut stop = vec![false; tree.n_nodes()];
        for v in tree.terminal_range() {
            stop[v] = true;
        }
        Self { stop }
    }

    /// Stops immediately at the root.
    pub fn at_root(tree: &EventTree) -> Self {
        let mut rule = Self::at_horizon(tree);
        rule.stop[0] = true;
        rule
    }

    /// Marks the given nodes (terminals are forced regardless).
    pub fn from_marks(tree: &EventTree, marks: impl IntoIterator<Item = usize>) -> Self {
        let mut rule = Self::at_horizon(tree);
        for m in marks {
            rule.stop[m] = true;
        }
        rule
    }

    pub fn check_on(&self, tree: &EventTree) -> Result<()> {
        if self.stop.len() != tree.n_nodes() {
            return Err(SolverError::Mismatch(format!(
                "rule has {} marks for a {}-node tree",
                self.stop.len(),
                tree.n_nodes()
            )));
        }
        if tree.terminal_range().any(|v| !self.stop[v]) {
            return Err(SolverError::Mismatch("rule leaves a terminal node unmarked".into()));
        }
        Ok(())
    }

    /// First marked node on the path to each node (`NO_NODE` when none yet).
    pub fn first_stop(&self, tree: &EventTree) -> Vec<u32> {
        let mut fs = vec![NO_NODE; tree.n_nodes()];
        for v in 0..tree.n_nodes() {
            let inherited = match tree.parent(v) {
                Some(p) => fs[p],
                None => NO_NODE,
            };
            fs[v] = if inherited != NO_NODE {
                inherited
            } else if self.stop[v] {
                v as u32
            } else {
                NO_NODE
            };
        }
        fs
    }

    /// Stop node per terminal (every path stops by the horizon).
    pub fn stop_per_terminal(&self, tree: &EventTree) -> Vec<usize> {
        let fs = self.first_stop(tree);
        tree.terminal_range().map(|v| fs[v] as usize).collect()
    }

    /// Nodes at which the rule effectively stops: marked nodes with no marked
    /// strict ancestor. Two rules induce the same stopping time iff their
    /// canonical sets are equal.
    pub fn canonical_stops(&self, tree: &EventTree) -> Vec<usize> {
        let fs = self.first_stop(tree);
        let mut out: Vec<usize> =
            (0..tree.n_nodes()).filter(|&v| fs[v] == v as u32).collect();
        out.sort_unstable();
        out
    }

    pub fn same_stopping_time(&self, other: &StoppingRule, tree: &EventTree) -> bool {
        self.canonical_stops(tree) == other.canonical_stops(tree)
    }

    /// Pathwise minimum of two rules (union of markings).
    pub fn earlier_of(&self, other: &StoppingRule) -> StoppingRule {
        StoppingRule {
            stop: self
                .stop
                .iter()
                .zip(&other.stop)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    /// Reads an adapted process at the induced stopping time and lifts the
    /// result to a terminal claim (constant on the subtree below the stop).
    pub fn lift_stopped(&self, tree: &EventTree, process: &AdaptedProcess) -> TerminalClaim {
        let stops = self.stop_per_terminal(tree);
        TerminalClaim {
            values: stops.iter().map(|&s| process.values[s]).collect(),
        }
    }
}

/// Stopped payoff of the game: `X` at the exercise time when it is not later
/// than the recall time, otherwise `Y` at the recall time; the amount is
/// carried unchanged to the matching terminal node (zero riskless rate).
pub fn stopped_payoff(
    tree: &EventTree,
    x: &AdaptedProcess,
    y: &AdaptedProcess,
    tau: &StoppingRule,
    sigma: &StoppingRule,
) -> Result<TerminalClaim> {
    x.check_on(tree)?;
    y.check_on(tree)?;
    tau.check_on(tree)?;
    sigma.check_on(tree)?;
    let ts = tau.stop_per_terminal(tree);
    let ss = sigma.stop_per_terminal(tree);
    let values = ts
        .iter()
        .zip(&ss)
        .map(|(&t, &s)| {
            if tree.time_of(t) <= tree.time_of(s) {
                x.values[t]
            } else {
                y.values[s]
            }
        })
        .collect();
    Ok(TerminalClaim { values })
}

/// First time the envelope `V` touches the payoff `L`: marks every node with
/// `V - L <= tol`. Terminal nodes are always marked.
pub fn hitting_rule(
    tree: &EventTree,
    envelope: &AdaptedProcess,
    payoff: &AdaptedProcess,
    tol: f64,
) -> Result<StoppingRule> {
    envelope.check_on(tree)?;
    payoff.check_on(tree)?;
    let mut worst = (0usize, 0.0f64);
    for v in 0..tree.n_nodes() {
        let gap = envelope.values[v] - payoff.values[v];
        if gap < worst.1 {
            worst = (v, gap);
        }
    }
    if worst.1 < -tol {
        return Err(SolverError::DominationViolated { node: worst.0, gap: -worst.1 });
    }
    let mut rule = StoppingRule::at_horizon(tree);
    for v in 0..tree.n_nodes() {
        if envelope.values[v] - payoff.values[v] <= tol {
            rule.stop[v] = true;
        }
    }
    Ok(rule)
}

/// Default tolerance for exercise-boundary detection.
pub fn hitting_tolerance(payoff_sup: f64) -> f64 {
    1e-9 * (1.0 + payoff_sup)
}

/// Exhaustive enumeration of stopping rules: every marking of the
/// non-terminal nodes, terminals always stopped.
pub fn enumerate_stopping_rules(tree: &EventTree) -> Result<RuleEnumeration<'_>> {
    enumerate_stopping_rules_with_cap(tree, DEFAULT_ENUM_CAP)
}

pub fn enumerate_stopping_rules_with_cap(
    tree: &EventTree,
    cap: usize,
) -> Result<RuleEnumeration<'_>> {
    let n = tree.n_non_terminal();
    if n > cap {
        return Err(SolverError::EnumerationCap { needed: n, cap });
    }
    Ok(RuleEnumeration { tree, mask: 0, count: 1u64 << n })
}

pub struct RuleEnumeration<'a> {
    tree: &'a EventTree,
    mask: u64,
    count: u64,
}

impl Iterator for RuleEnumeration<'_> {
    type Item = StoppingRule;

    fn next(&mut self) -> Option<StoppingRule> {
        if self.mask >= self.count {
            return None;
        }
        let mut rule = StoppingRule::at_horizon(self.tree);
        for i in 0..self.tree.n_non_terminal() {
            if self.mask >> i & 1 == 1 {
                rule.stop[i] = true;
            }
        }
        self.mask += 1;
        Some(rule)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Probability,
    Structure,
    Arbitrage,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub node: usize,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks probability normalization, positivity, structural integrity and
/// the per-node one-step no-arbitrage condition.
pub fn validate_tree(tree: &EventTree) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = tree.asset_dim();
    for k in 0..tree.steps() {
        for v in tree.slice(k) {
            let probs = tree.core.probs(v);
            let mut sum = 0.0;
            for &p in probs {
                sum += p;
                if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
                    report.violations.push(Violation {
                        node: v,
                        kind: ViolationKind::Probability,
                        message: format!("transition probability {p} outside (0, 1]"),
                    });
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                report.violations.push(Violation {
                    node: v,
                    kind: ViolationKind::Probability,
                    message: format!("child probabilities sum to {sum:.17}, not 1"),
                });
            }
            if tree.core.increments(v).iter().any(|x| !x.is_finite()) {
                report.violations.push(Violation {
                    node: v,
                    kind: ViolationKind::Structure,
                    message: "non-finite asset increment".into(),
                });
            } else if !zero_in_hull_interior(tree.core.increments(v), d) {
                report.violations.push(Violation {
                    node: v,
                    kind: ViolationKind::Arbitrage,
                    message: "zero outside the relative interior of the child increment hull"
                        .into(),
                });
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Parameters for the symmetric binomial walk tree. The walk `W` moves by
/// `±vol·sqrt(dt)` with probability 1/2; the drift enters the returned
/// `drifted` process (`W + drift·t`) rather than the branch probabilities.
#[derive(Debug, Clone)]
pub struct BinomialSpec {
    pub steps: usize,
    pub horizon_years: f64,
    pub drift: f64,
    pub vol: f64,
    pub traded: bool,
}

/// A built binomial model: the tree, the driftless walk and the drifted
/// version of it.
#[derive(Debug, Clone)]
pub struct BinomialModel {
    pub tree: EventTree,
    pub walk: AdaptedProcess,
    pub drifted: AdaptedProcess,
}

pub fn build_binomial(spec: &BinomialSpec) -> Result<BinomialModel> {
    if spec.steps < 1 || !(spec.vol > 0.0) || !(spec.horizon_years > 0.0) {
        return Err(SolverError::InvalidModel(format!(
            "binomial spec needs steps >= 1, vol > 0, horizon > 0 (got steps={}, vol={}, T={})",
            spec.steps, spec.horizon_years, spec.vol
        )));
    }
    let n_nodes = (1usize << (spec.steps + 1)) - 1;
    if n_nodes > MAX_NODES {
        return Err(SolverError::InvalidModel(format!(
            "binomial tree with {} steps has {} nodes, above the ceiling; use the lattice engine",
            spec.steps, n_nodes
        )));
    }
    let dt = spec.horizon_years / spec.steps as f64;
    let h = spec.vol * dt.sqrt();
    let d = if spec.traded { 1 } else { 0 };

    let mut slices = Vec::with_capacity(spec.steps + 1);
    let mut start = 0usize;
    for k in 0..=spec.steps {
        let width = 1usize << k;
        slices.push(start..start + width);
        start += width;
    }
    let n_edges = n_nodes - 1;
    let mut edge_start = vec![0u32; n_nodes + 1];
    let mut edge_child = vec![0u32; n_edges];
    let mut edge_prob = vec![0.5; n_edges];
    let mut edge_incr = vec![0.0; n_edges * d];
    let mut parent = vec![NO_NODE; n_nodes];
    let mut walk = vec![0.0; n_nodes];

    let mut e = 0usize;
    for k in 0..spec.steps {
        let next_start = slices[k + 1].start;
        for (j, v) in slices[k].clone().enumerate() {
            edge_start[v] = e as u32;
            for b in 0..2 {
                let child = next_start + 2 * j + b;
                edge_child[e] = child as u32;
                parent[child] = v as u32;
                let dw = if b == 0 { h } else { -h };
                walk[child] = walk[v] + dw;
                if d == 1 {
                    edge_incr[e] = dw;
                }
                e += 1;
            }
        }
    }
    for v in slices[spec.steps].clone() {
        edge_start[v] = e as u32;
    }
    edge_start[n_nodes] = e as u32;

    let tree = EventTree {
        core: DagCore {
            slices,
            edge_start,
            edge_child,
            edge_prob: std::mem::take(&mut edge_prob),
            edge_incr,
            asset_dim: d,
        },
        parent,
        horizon_years: spec.horizon_years,
    };
    let drifted = AdaptedProcess::from_fn(&tree, |v| walk[v] + spec.drift * tree.time_years(v));
    Ok(BinomialModel { tree, walk: AdaptedProcess { values: walk }, drifted })
}

/// How the untraded driver loads on the three branches relative to the
/// traded increment pattern `[+h, 0, -h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationPattern {
    /// Driver increments `[+g, -g, 0]`: positively correlated with the asset.
    Positive,
    /// Driver increments `[-g, +g, 0]`.
    Negative,
    /// Driver increments `[+g, -2g, +g]`: mean zero, uncorrelated.
    Uncorrelated,
}

impl CorrelationPattern {
    fn loads(&self) -> [f64; 3] {
        match self {
            CorrelationPattern::Positive => [1.0, -1.0, 0.0],
            CorrelationPattern::Negative => [-1.0, 1.0, 0.0],
            CorrelationPattern::Uncorrelated => [1.0, -2.0, 1.0],
        }
    }
}

/// A built trinomial model: one traded asset with increments `[+h, 0, -h]`
/// per node (so the market is genuinely incomplete) and an untraded driver
/// that the asset does not span.
#[derive(Debug, Clone)]
pub struct TrinomialModel {
    pub tree: EventTree,
    /// Cumulative traded-asset value along the path.
    pub traded: AdaptedProcess,
    /// Cumulative untraded driver along the path.
    pub untraded: AdaptedProcess,
}

pub fn build_incomplete_trinomial(
    steps: usize,
    horizon_years: f64,
    traded_vol: f64,
    untraded_vol: f64,
    pattern: CorrelationPattern,
) -> Result<TrinomialModel> {
    if steps < 1 || !(traded_vol > 0.0) || !(untraded_vol > 0.0) || !(horizon_years > 0.0) {
        return Err(SolverError::InvalidModel(
            "trinomial spec needs steps >= 1 and positive vols and horizon".into(),
        ));
    }
    let mut n_nodes = 0usize;
    let mut width = 1usize;
    for _ in 0..=steps {
        n_nodes += width;
        width *= 3;
    }
    if n_nodes > MAX_NODES {
        return Err(SolverError::InvalidModel(format!(
            "trinomial tree with {steps} steps has {n_nodes} nodes, above the ceiling"
        )));
    }
    let dt = horizon_years / steps as f64;
    let h = traded_vol * dt.sqrt();
    let g = untraded_vol * dt.sqrt();
    let ds_pattern = [h, 0.0, -h];
    let du_pattern = pattern.loads().map(|l| l * g);

    let mut slices = Vec::with_capacity(steps + 1);
    let mut start = 0usize;
    let mut width = 1usize;
    for _ in 0..=steps {
        slices.push(start..start + width);
        start += width;
        width *= 3;
    }
    let n_edges = n_nodes - 1;
    let mut edge_start = vec![0u32; n_nodes + 1];
    let mut edge_child = vec![0u32; n_edges];
    let edge_prob = vec![1.0 / 3.0; n_edges];
    let mut edge_incr = vec![0.0; n_edges];
    let mut parent = vec![NO_NODE; n_nodes];
    let mut traded = vec![0.0; n_nodes];
    let mut untraded = vec![0.0; n_nodes];

    let mut e = 0usize;
    for k in 0..steps {
        let next_start = slices[k + 1].start;
        for (j, v) in slices[k].clone().enumerate() {
            edge_start[v] = e as u32;
            for b in 0..3 {
                let child = next_start + 3 * j + b;
                edge_child[e] = child as u32;
                parent[child] = v as u32;
                traded[child] = traded[v] + ds_pattern[b];
                untraded[child] = untraded[v] + du_pattern[b];
                edge_incr[e] = ds_pattern[b];
                e += 1;
            }
        }
    }
    for v in slices[steps].clone() {
        edge_start[v] = e as u32;
    }
    edge_start[n_nodes] = e as u32;

    let tree = EventTree {
        core: DagCore {
            slices,
            edge_start,
            edge_child,
            edge_prob,
            edge_incr,
            asset_dim: 1,
        },
        parent,
        horizon_years,
    };
    Ok(TrinomialModel {
        tree,
        traded: AdaptedProcess { values: traded },
        untraded: AdaptedProcess { values: untraded },
    })
}
