//! Recombining binomial lattice engine.
//!
//! Full event trees grow exponentially in the step count; when every input
//! (payoffs, endowments) is a function of time and the current walk level,
//! all valuation dynamic programs collapse onto the recombining lattice and
//! fifty-step models stay tiny. Stopping rules here are node markings in
//! (time, level) space with first-hit semantics; the tie modification of the
//! best-response iteration is assembled as a marking and the assembly is
//! verified exactly with flag dynamic programs over the lattice.

use crate::dag::DagCore;
use crate::dp;
use crate::dynkin::{FirstMover, NepReport};
use crate::error::{Result, SolverError};
use crate::measure::tilt_weights;
use crate::tree::hitting_tolerance;

/// Recombining symmetric binomial walk: slice `t` holds levels `0..=t`,
/// `W(t, j) = (2j - t) * vol * sqrt(dt)`.
#[derive(Debug, Clone)]
pub struct Lattice {
    core: DagCore,
    horizon_years: f64,
    step: f64,
}

impl Lattice {
    pub fn binomial(steps: usize, horizon_years: f64, vol: f64, traded: bool) -> Result<Self> {
        if steps < 1 || !(vol > 0.0) || !(horizon_years > 0.0) {
            return Err(SolverError::InvalidModel(
                "lattice needs steps >= 1, vol > 0, horizon > 0".into(),
            ));
        }
        let dt = horizon_years / steps as f64;
        let h = vol * dt.sqrt();
        let d = if traded { 1 } else { 0 };
        let n_nodes = (steps + 1) * (steps + 2) / 2;
        let mut slices = Vec::with_capacity(steps + 1);
        let mut start = 0usize;
        for k in 0..=steps {
            slices.push(start..start + k + 1);
            start += k + 1;
        }
        let n_edges = (n_nodes - (steps + 1)) * 2;
        let mut edge_start = vec![0u32; n_nodes + 1];
        let mut edge_child = vec![0u32; n_edges];
        let edge_prob = vec![0.5; n_edges];
        let mut edge_incr = vec![0.0; n_edges * d];
        let mut e = 0usize;
        for k in 0..steps {
            let next = slices[k + 1].start;
            for (j, v) in slices[k].clone().enumerate() {
                edge_start[v] = e as u32;
                // up then down, matching the tree builder's child order
                for (b, dj) in [(0usize, 1usize), (1, 0)] {
                    edge_child[e] = (next + j + dj) as u32;
                    if d == 1 {
                        edge_incr[e] = if b == 0 { h } else { -h };
                    }
                    e += 1;
                }
            }
        }
        for v in slices[steps].clone() {
            edge_start[v] = e as u32;
        }
        edge_start[n_nodes] = e as u32;
        Ok(Lattice {
            core: DagCore { slices, edge_start, edge_child, edge_prob, edge_incr, asset_dim: d },
            horizon_years,
            step: h,
        })
    }

    pub fn core(&self) -> &DagCore {
        &self.core
    }

    pub fn steps(&self) -> usize {
        self.core.steps()
    }

    pub fn n_nodes(&self) -> usize {
        self.core.n_nodes()
    }

    pub fn horizon_years(&self) -> f64 {
        self.horizon_years
    }

    /// (time index, level) of a node.
    pub fn coords(&self, node: usize) -> (usize, usize) {
        let t = self.core.time_of(node);
        (t, node - self.core.slice(t).start)
    }

    pub fn time_years_of(&self, node: usize) -> f64 {
        self.core.time_of(node) as f64 * self.horizon_years / self.steps() as f64
    }

    /// Walk value at a node.
    pub fn walk(&self, node: usize) -> f64 {
        let (t, j) = self.coords(node);
        (2.0 * j as f64 - t as f64) * self.step
    }

    /// Node process from a function of (time in years, walk value).
    pub fn node_process(&self, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|v| f(self.time_years_of(v), self.walk(v)))
            .collect()
    }

    /// Terminal claim from a function of (horizon, terminal walk value).
    pub fn terminal_claim(&self, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        self.core
            .terminal_slice()
            .map(|v| f(self.horizon_years, self.walk(v)))
            .collect()
    }
}

/// Stop marking over lattice nodes; a path stops at its first marked node.
/// The terminal slice is always marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeRule {
    pub marks: Vec<bool>,
}

impl LatticeRule {
    pub fn at_horizon(lat: &Lattice) -> Self {
        let mut marks = vec![false; lat.n_nodes()];
        for v in lat.core.terminal_slice() {
            marks[v] = true;
        }
        LatticeRule { marks }
    }

    pub fn at_root(lat: &Lattice) -> Self {
        let mut r = Self::at_horizon(lat);
        r.marks[0] = true;
        r
    }

    /// Marked nodes reachable without an earlier mark: the support of the
    /// induced stopping time. Two rules coincide iff these sets coincide.
    pub fn effective_stops(&self, lat: &Lattice) -> Vec<usize> {
        let core = &lat.core;
        let mut open = vec![false; core.n_nodes()];
        open[0] = true;
        let mut out = Vec::new();
        for k in 0..=core.steps() {
            for v in core.slice(k) {
                if !open[v] {
                    continue;
                }
                if self.marks[v] {
                    out.push(v);
                } else {
                    for e in core.edge_range(v) {
                        open[core.edge_child[e] as usize] = true;
                    }
                }
            }
        }
        out
    }

    pub fn same_stopping_time(&self, other: &LatticeRule, lat: &Lattice) -> bool {
        self.effective_stops(lat) == other.effective_stops(lat)
    }

    /// True if this rule stops everywhere at the root.
    pub fn stops_at_root(&self) -> bool {
        self.marks[0]
    }

    /// True if the rule never stops before the horizon.
    pub fn stops_only_at_horizon(&self, lat: &Lattice) -> bool {
        self.effective_stops(lat) == lat.core.terminal_slice().collect::<Vec<_>>()
    }
}

/// Agent data on the lattice: risk aversion plus an endowment per terminal
/// level.
#[derive(Debug, Clone)]
pub struct LatticeAgent {
    pub risk_aversion: f64,
    pub endowment: Vec<f64>,
}

/// Game payoffs and agents on the lattice.
#[derive(Debug, Clone)]
pub struct LatticeGcc {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub buyer: LatticeAgent,
    pub seller: LatticeAgent,
}

impl LatticeGcc {
    pub fn new(
        lat: &Lattice,
        x: Vec<f64>,
        y: Vec<f64>,
        buyer: LatticeAgent,
        seller: LatticeAgent,
    ) -> Result<Self> {
        let n = lat.n_nodes();
        let nt = lat.core.terminal_slice().len();
        if x.len() != n || y.len() != n {
            return Err(SolverError::Mismatch("payoff length does not match the lattice".into()));
        }
        if buyer.endowment.len() != nt || seller.endowment.len() != nt {
            return Err(SolverError::Mismatch("endowment length does not match the lattice".into()));
        }
        if !(buyer.risk_aversion > 0.0) || !(seller.risk_aversion > 0.0) {
            return Err(SolverError::Mismatch("risk aversions must be positive".into()));
        }
        for v in 0..n {
            if x[v] > y[v] {
                return Err(SolverError::Mismatch(format!(
                    "exercise payoff exceeds recall payoff at lattice node {v}"
                )));
            }
        }
        Ok(LatticeGcc { x, y, buyer, seller })
    }
}

/// Pricing weights of an agent: entropy-minimizing martingale weights of the
/// endowment-tilted lattice.
fn pricing_weights(core: &DagCore, agent: &LatticeAgent) -> Result<Vec<f64>> {
    let tilted = tilt_weights(core, &agent.endowment, agent.risk_aversion)?;
    let (q, _) = dp::emmm_weights(core, &tilted.weights)?;
    Ok(q)
}

/// Root indifference value of the stopped game payoff for one side.
/// `buyer_side` selects the sign convention and the valuation weights.
fn game_value(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    gcc: &LatticeGcc,
    tau: &LatticeRule,
    sigma: &LatticeRule,
    buyer_side: bool,
) -> Result<f64> {
    let n = core.n_nodes();
    let mut marks = vec![false; n];
    let mut settle = vec![0.0; n];
    for v in 0..n {
        if tau.marks[v] {
            // tie or buyer first: the exercise payoff applies
            marks[v] = true;
            settle[v] = if buyer_side { gcc.x[v] } else { -gcc.x[v] };
        } else if sigma.marks[v] {
            marks[v] = true;
            settle[v] = if buyer_side { gcc.y[v] } else { -gcc.y[v] };
        }
    }
    Ok(dp::absorbed_values(core, weights, alpha, &marks, &settle)?[0])
}

/// Best response of one side on the lattice. Returns the new marking and the
/// envelope; errors if the tie modification cannot be represented as a
/// marking, which cannot happen along the monotone iteration.
fn lattice_response(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    running: &[f64],
    freeze: &[f64],
    counter: &LatticeRule,
    prev: &LatticeRule,
) -> Result<(LatticeRule, Vec<f64>)> {
    let n = core.n_nodes();
    let envelope =
        dp::snell_values(core, weights, alpha, running, Some((&counter.marks, freeze)))?;
    let tol = hitting_tolerance(running.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    // Nodes reachable before the counter-party stops; envelope values beyond
    // that region do not belong to a running game.
    let mut pre = vec![false; n];
    pre[0] = !counter.marks[0];
    for k in 0..core.steps() {
        for v in core.slice(k) {
            if !pre[v] {
                continue;
            }
            for e in core.edge_range(v) {
                let c = core.edge_child[e] as usize;
                pre[c] = pre[c] || !counter.marks[c];
            }
        }
    }
    // Hit region of the envelope on the stand-alone payoff, off the
    // counter-party stop.
    let mut hit = vec![false; n];
    let mut tilde = vec![false; n];
    let mut marks = prev.marks.clone();
    for v in 0..n {
        hit[v] = pre[v] && !counter.marks[v] && envelope[v] - running[v] <= tol;
        tilde[v] = hit[v] || counter.marks[v];
        if hit[v] {
            marks[v] = true;
        }
    }
    // Per-path semantics of the modification: stop at the hit when it comes
    // strictly before the counter-party stop, at the previous own rule
    // otherwise. The union marking realizes that iff (a) the previous rule
    // never fires strictly before the capped hit and (b) no hit node sits
    // between a tie and the previous rule's stop.
    if core.exists_path_hit_strictly_before(&prev.marks, &tilde) {
        return Err(SolverError::Internal(
            "lattice best response: previous rule preempts the capped hit".into(),
        ));
    }
    if core.exists_hit_between(&tilde, &hit, &hit, &prev.marks) {
        return Err(SolverError::Internal(
            "lattice best response: tie modification is not a lattice marking".into(),
        ));
    }
    Ok((LatticeRule { marks }, envelope))
}

/// One round of the lattice iteration.
#[derive(Debug, Clone)]
pub struct LatticeTraceEntry {
    pub round: usize,
    pub buyer_stops: Vec<usize>,
    pub seller_stops: Vec<usize>,
    pub j_buyer: f64,
    pub j_seller: f64,
}

#[derive(Debug)]
pub struct LatticeNashResult {
    pub buyer_rule: LatticeRule,
    pub seller_rule: LatticeRule,
    pub j_buyer: f64,
    pub j_seller: f64,
    pub trace: Vec<LatticeTraceEntry>,
    pub converged: bool,
}

/// Alternating best responses from the all-horizon pair, on the lattice.
pub fn lattice_nash_iterate(
    lat: &Lattice,
    gcc: &LatticeGcc,
    first_mover: FirstMover,
    max_iter: usize,
) -> Result<LatticeNashResult> {
    let core = lat.core();
    let n = core.n_nodes();
    let buyer_w = pricing_weights(core, &gcc.buyer)?;
    let seller_w = pricing_weights(core, &gcc.seller)?;
    let alpha_b = gcc.buyer.risk_aversion;
    let alpha_a = gcc.seller.risk_aversion;

    // Auxiliary running payoffs and freeze values per side.
    let terminal_start = core.terminal_slice().start;
    let buyer_freeze: Vec<f64> =
        (0..n).map(|v| if v >= terminal_start { gcc.x[v] } else { gcc.y[v] }).collect();
    let seller_running: Vec<f64> = gcc.y.iter().map(|y| -y).collect();
    let seller_freeze: Vec<f64> = gcc.x.iter().map(|x| -x).collect();

    let mut tau = LatticeRule::at_horizon(lat);
    let mut sigma = LatticeRule::at_horizon(lat);
    let mut trace = Vec::new();
    let mut converged = false;
    for round in 1..=max_iter {
        let (new_tau, new_sigma) = match first_mover {
            FirstMover::Buyer => {
                let (t, _) =
                    lattice_response(core, &buyer_w, alpha_b, &gcc.x, &buyer_freeze, &sigma, &tau)?;
                let (s, _) = lattice_response(
                    core,
                    &seller_w,
                    alpha_a,
                    &seller_running,
                    &seller_freeze,
                    &t,
                    &sigma,
                )?;
                (t, s)
            }
            FirstMover::Seller => {
                let (s, _) = lattice_response(
                    core,
                    &seller_w,
                    alpha_a,
                    &seller_running,
                    &seller_freeze,
                    &tau,
                    &sigma,
                )?;
                let (t, _) =
                    lattice_response(core, &buyer_w, alpha_b, &gcc.x, &buyer_freeze, &s, &tau)?;
                (t, s)
            }
        };
        // The union construction contains the previous marks, so each
        // player's sequence is pathwise nonincreasing by construction.
        let fixed =
            new_tau.same_stopping_time(&tau, lat) && new_sigma.same_stopping_time(&sigma, lat);
        tau = new_tau;
        sigma = new_sigma;
        let j_buyer = game_value(core, &buyer_w, alpha_b, gcc, &tau, &sigma, true)?;
        let j_seller = game_value(core, &seller_w, alpha_a, gcc, &tau, &sigma, false)?;
        trace.push(LatticeTraceEntry {
            round,
            buyer_stops: tau.effective_stops(lat),
            seller_stops: sigma.effective_stops(lat),
            j_buyer,
            j_seller,
        });
        if fixed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolverError::NoConvergence(max_iter));
    }
    let last = trace.last().unwrap();
    Ok(LatticeNashResult {
        buyer_rule: tau,
        seller_rule: sigma,
        j_buyer: last.j_buyer,
        j_seller: last.j_seller,
        trace,
        converged,
    })
}

/// Envelope-based equilibrium verification on the lattice.
pub fn lattice_verify_nep(
    lat: &Lattice,
    gcc: &LatticeGcc,
    tau: &LatticeRule,
    sigma: &LatticeRule,
) -> Result<NepReport> {
    let core = lat.core();
    let n = core.n_nodes();
    let buyer_w = pricing_weights(core, &gcc.buyer)?;
    let seller_w = pricing_weights(core, &gcc.seller)?;
    let alpha_b = gcc.buyer.risk_aversion;
    let alpha_a = gcc.seller.risk_aversion;
    let terminal_start = core.terminal_slice().start;
    let buyer_freeze: Vec<f64> =
        (0..n).map(|v| if v >= terminal_start { gcc.x[v] } else { gcc.y[v] }).collect();
    let seller_running: Vec<f64> = gcc.y.iter().map(|y| -y).collect();
    let seller_freeze: Vec<f64> = gcc.x.iter().map(|x| -x).collect();

    let j_buyer = game_value(core, &buyer_w, alpha_b, gcc, tau, sigma, true)?;
    let j_seller = game_value(core, &seller_w, alpha_a, gcc, tau, sigma, false)?;
    let buyer_best =
        dp::snell_values(core, &buyer_w, alpha_b, &gcc.x, Some((&sigma.marks, &buyer_freeze)))?[0];
    let seller_best = dp::snell_values(
        core,
        &seller_w,
        alpha_a,
        &seller_running,
        Some((&tau.marks, &seller_freeze)),
    )?[0];
    Ok(NepReport {
        j_buyer,
        j_seller,
        buyer_gap: buyer_best - j_buyer,
        seller_gap: seller_best - j_seller,
    })
}

/// Root indifference value of a terminal claim for a lattice agent.
pub fn lattice_claim_value(lat: &Lattice, agent: &LatticeAgent, claim: &[f64]) -> Result<f64> {
    let core = lat.core();
    let w = pricing_weights(core, agent)?;
    Ok(dp::european_values(core, &w, agent.risk_aversion, claim)?[0])
}
