//! Dynamic exponential indifference valuation.
//!
//! The canonical algorithm runs one backward pass under the endowment-tilted
//! entropy-minimizing martingale measure, composing one-step certainty
//! equivalents. The primal route (a ratio of two utility dynamic programs
//! under the physical measure) is kept as an independent cross-check.

use crate::dag::DagCore;
use crate::dp;
use crate::error::{Result, SolverError};
use crate::measure::{emmm, measure_from_edges, tilt_measure, Agent, MartingaleMeasure, TiltedWeights};
use crate::onestep::one_step_ce;
use crate::tree::{AdaptedProcess, EventTree, StoppingRule, TerminalClaim};

/// Valuation operator of one agent on one tree. Caches the tilted weights
/// and the tilted entropy-minimizing martingale measure; immutable after
/// construction, so concurrent valuations against one `Valuer` are safe.
#[derive(Debug)]
pub struct Valuer<'a> {
    tree: &'a EventTree,
    agent: Agent,
    tilted: TiltedWeights,
    emmm: MartingaleMeasure,
}

impl<'a> Valuer<'a> {
    pub fn new(tree: &'a EventTree, agent: Agent) -> Result<Self> {
        agent.endowment.check_on(tree)?;
        let tilted = tilt_measure(tree, &agent.endowment, agent.risk_aversion)?;
        let emmm = emmm(tree.core(), &tilted.weights)?;
        Ok(Valuer { tree, agent, tilted, emmm })
    }

    pub fn tree(&self) -> &'a EventTree {
        self.tree
    }

    pub fn alpha(&self) -> f64 {
        self.agent.risk_aversion
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    /// Tilted physical transition weights (density proportional to
    /// `exp(-alpha C)`).
    pub fn tilted_weights(&self) -> &TiltedWeights {
        &self.tilted
    }

    /// The pricing measure: EMMM of the tilted weights.
    pub fn pricing_measure(&self) -> &MartingaleMeasure {
        &self.emmm
    }

    /// Indifference value process of a terminal claim.
    ///
    /// The result is bounded by the sup norm of the claim at every node.
    pub fn value_process(&self, claim: &TerminalClaim) -> Result<AdaptedProcess> {
        claim.check_on(self.tree)?;
        let values = dp::european_values(
            self.tree.core(),
            &self.emmm.edge_prob,
            self.alpha(),
            &claim.values,
        )?;
        Ok(AdaptedProcess { values })
    }

    /// Primal cross-check: the difference of the with-claim and without-claim
    /// utility dynamic programs under the physical measure.
    pub fn value_process_primal(&self, claim: &TerminalClaim) -> Result<AdaptedProcess> {
        claim.check_on(self.tree)?;
        let core = self.tree.core();
        let alpha = self.alpha();
        let with_claim: Vec<f64> = claim
            .values
            .iter()
            .zip(&self.agent.endowment.values)
            .map(|(h, c)| h + c)
            .collect();
        let numerator = dp::european_values(core, &core.edge_prob, alpha, &with_claim)?;
        let denominator =
            dp::european_values(core, &core.edge_prob, alpha, &self.agent.endowment.values)?;
        let values = numerator
            .iter()
            .zip(&denominator)
            .map(|(n, d)| n - d)
            .collect();
        Ok(AdaptedProcess { values })
    }

    /// Root indifference value of a terminal claim.
    pub fn value_of_claim(&self, claim: &TerminalClaim) -> Result<f64> {
        Ok(self.value_process(claim)?.values[0])
    }

    /// Root indifference value of an adapted process read at a stopping rule
    /// and carried to the horizon.
    pub fn value_at(&self, process: &AdaptedProcess, rule: &StoppingRule) -> Result<f64> {
        process.check_on(self.tree)?;
        rule.check_on(self.tree)?;
        self.value_of_claim(&rule.lift_stopped(self.tree, process))
    }

    /// Dual slack of a martingale measure `q` (given on the tilted tree):
    ///
    ///   E^q[H] + (entropy(q) - entropy(pricing measure)) / alpha - value(H)
    ///
    /// Nonnegative for every equivalent martingale measure, zero at the dual
    /// optimizer.
    pub fn dual_gap(&self, claim: &TerminalClaim, q: &MartingaleMeasure) -> Result<f64> {
        claim.check_on(self.tree)?;
        let core = self.tree.core();
        if q.edge_prob.len() != core.n_edges() {
            return Err(SolverError::Mismatch(format!(
                "measure has {} edge weights for a tree with {} edges",
                q.edge_prob.len(),
                core.n_edges()
            )));
        }
        let expectation = core.terminal_expectation(&q.edge_prob, &claim.values);
        let price = self.value_of_claim(claim)?;
        Ok(expectation + (q.relative_entropy - self.emmm.relative_entropy) / self.alpha() - price)
    }

    /// The measure attaining the dual representation for `claim`: the
    /// per-node minimizing weights of the valuation dynamic program.
    pub fn dual_optimizer(&self, claim: &TerminalClaim) -> Result<MartingaleMeasure> {
        claim.check_on(self.tree)?;
        let core = self.tree.core();
        let pi = self.value_process(claim)?;
        let weights = minimizing_weights(core, &self.emmm.edge_prob, self.alpha(), &pi.values)?;
        measure_from_edges(core, &self.tilted.weights, weights)
    }
}

/// Per-node dual weights of the certainty-equivalent solves along an already
/// computed value process.
fn minimizing_weights(
    core: &DagCore,
    weights: &[f64],
    alpha: f64,
    values: &[f64],
) -> Result<Vec<f64>> {
    let d = core.asset_dim();
    let mut out = vec![0.0; core.n_edges()];
    let mut vals = Vec::with_capacity(8);
    for k in 0..core.steps() {
        for v in core.slice(k) {
            let r = core.edge_range(v);
            vals.clear();
            for e in r.clone() {
                vals.push(values[core.edge_child[e] as usize]);
            }
            let sol = one_step_ce(
                &weights[r.clone()],
                &core.edge_incr[r.start * d..r.end * d],
                d,
                &vals,
                alpha,
            )?;
            out[r].copy_from_slice(&sol.dual_weights);
        }
    }
    Ok(out)
}

/// Max residual over nodes of the endowment-reduction identity: pricing with
/// endowment `C` must match pricing without endowment applied to `C + H`
/// minus the price of `C` alone.
pub fn endowment_identity_check(
    tree: &EventTree,
    alpha: f64,
    endowment: &TerminalClaim,
    claim: &TerminalClaim,
) -> Result<f64> {
    let with_endowment = Valuer::new(tree, Agent::new(alpha, endowment.clone())?)?;
    let plain = Valuer::new(tree, Agent::without_endowment(tree, alpha)?)?;
    let lhs = with_endowment.value_process(claim)?;
    let sum = TerminalClaim {
        values: claim
            .values
            .iter()
            .zip(&endowment.values)
            .map(|(h, c)| h + c)
            .collect(),
    };
    let rhs_sum = plain.value_process(&sum)?;
    let rhs_c = plain.value_process(endowment)?;
    let mut worst = 0.0f64;
    for v in 0..tree.n_nodes() {
        worst = worst.max((lhs.values[v] - (rhs_sum.values[v] - rhs_c.values[v])).abs());
    }
    Ok(worst)
}
