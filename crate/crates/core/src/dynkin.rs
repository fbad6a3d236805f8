//! The stopping game between buyer and seller of a game contingent claim:
//! auxiliary-payoff best responses, the monotone best-response iteration to
//! a Nash equilibrium pair, and equilibrium verification.

use crate::error::{Result, SolverError};
use crate::indifference::Valuer;
use crate::measure::Agent;
use crate::snell::{snell_envelope, SnellResult};
use crate::tree::{
    enumerate_stopping_rules_with_cap, stopped_payoff, AdaptedProcess, EventTree, StoppingRule,
    NO_NODE,
};

/// Tolerance for equilibrium verification gaps.
pub const NEP_TOL: f64 = 1e-9;

/// A game contingent claim: the buyer exercises and receives `X`, the seller
/// recalls and pays `Y`, with `X <= Y` (recalling early is penalized). On a
/// tie the buyer's payoff applies.
#[derive(Debug, Clone)]
pub struct GccSpec {
    pub x: AdaptedProcess,
    pub y: AdaptedProcess,
    pub buyer: Agent,
    pub seller: Agent,
}

impl GccSpec {
    pub fn new(
        tree: &EventTree,
        x: AdaptedProcess,
        y: AdaptedProcess,
        buyer: Agent,
        seller: Agent,
    ) -> Result<Self> {
        x.check_on(tree)?;
        y.check_on(tree)?;
        buyer.endowment.check_on(tree)?;
        seller.endowment.check_on(tree)?;
        for v in 0..tree.n_nodes() {
            if x.values[v] > y.values[v] {
                return Err(SolverError::Mismatch(format!(
                    "exercise payoff exceeds recall payoff at node {v}: {} > {}",
                    x.values[v], y.values[v]
                )));
            }
        }
        Ok(GccSpec { x, y, buyer, seller })
    }
}

/// Which player moves first in the best-response iteration. The paper's
/// examples show the two orders can reach different equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstMover {
    Buyer,
    Seller,
}

/// One best-response computation: the frozen auxiliary payoff, its Snell
/// envelope, the capped hitting rule and the modified response rule.
#[derive(Debug)]
pub struct BestResponse {
    pub auxiliary_payoff: AdaptedProcess,
    pub snell: SnellResult,
    /// First hit of the envelope on the stand-alone payoff, capped at the
    /// counter-party rule.
    pub tilde_rule: StoppingRule,
    /// Response after the tie modification: the previous own rule replaces
    /// the hit wherever the hit coincides with the counter-party stop.
    pub rule: StoppingRule,
}

/// The buyer's auxiliary payoff against a recall rule: the exercise payoff
/// while the game runs, frozen at the recall value from the stop on (the
/// terminal exercise value when the recall only happens at the horizon).
fn buyer_auxiliary(tree: &EventTree, gcc: &GccSpec, sigma: &StoppingRule) -> AdaptedProcess {
    let first = sigma.first_stop(tree);
    AdaptedProcess::from_fn(tree, |v| match first[v] {
        NO_NODE => gcc.x.values[v],
        s => {
            let s = s as usize;
            if tree.is_terminal(s) {
                gcc.x.values[s]
            } else {
                gcc.y.values[s]
            }
        }
    })
}

/// The seller's auxiliary payoff against an exercise rule: minus the recall
/// payoff while the game runs, frozen at minus the exercise value from the
/// stop on.
fn seller_auxiliary(tree: &EventTree, gcc: &GccSpec, tau: &StoppingRule) -> AdaptedProcess {
    let first = tau.first_stop(tree);
    AdaptedProcess::from_fn(tree, |v| match first[v] {
        NO_NODE => -gcc.y.values[v],
        s => -gcc.x.values[s as usize],
    })
}

/// Assembles the modified response: per path, the capped hit when it comes
/// strictly before the counter-party stop, the previous own rule otherwise.
/// The result must induce exactly those stops; a mismatch means the inputs
/// did not come from a monotone iteration and is reported as an error.
fn modified_rule(
    tree: &EventTree,
    tilde: &StoppingRule,
    counter: &StoppingRule,
    prev: &StoppingRule,
) -> Result<StoppingRule> {
    let ft = tilde.stop_per_terminal(tree);
    let fc = counter.stop_per_terminal(tree);
    let fp = prev.stop_per_terminal(tree);
    let designated: Vec<usize> = ft
        .iter()
        .zip(&fc)
        .zip(&fp)
        .map(|((&t, &c), &p)| {
            if tree.time_of(t) < tree.time_of(c) {
                t
            } else {
                p
            }
        })
        .collect();
    let rule = StoppingRule::from_marks(tree, designated.iter().copied());
    let induced = rule.stop_per_terminal(tree);
    if induced != designated {
        return Err(SolverError::Internal(
            "modified best-response rule is not realizable as a stopping time; \
             inputs are outside the monotone iteration"
                .into(),
        ));
    }
    Ok(rule)
}

fn response(
    tree: &EventTree,
    valuer: &Valuer,
    aux: AdaptedProcess,
    counter: &StoppingRule,
    prev: &StoppingRule,
) -> Result<BestResponse> {
    let snell = snell_envelope(valuer, &aux)?;
    let tilde_rule = snell.optimal_rule.earlier_of(counter);
    let rule = modified_rule(tree, &tilde_rule, counter, prev)?;
    Ok(BestResponse { auxiliary_payoff: aux, snell, tilde_rule, rule })
}

/// Buyer best response to the seller's rule (with the previous buyer rule
/// for the tie modification).
pub fn buyer_response(
    tree: &EventTree,
    gcc: &GccSpec,
    buyer_valuer: &Valuer,
    seller_rule: &StoppingRule,
    prev_buyer_rule: &StoppingRule,
) -> Result<BestResponse> {
    seller_rule.check_on(tree)?;
    prev_buyer_rule.check_on(tree)?;
    let aux = buyer_auxiliary(tree, gcc, seller_rule);
    response(tree, buyer_valuer, aux, seller_rule, prev_buyer_rule)
}

/// Seller best response to the buyer's rule.
pub fn seller_response(
    tree: &EventTree,
    gcc: &GccSpec,
    seller_valuer: &Valuer,
    buyer_rule: &StoppingRule,
    prev_seller_rule: &StoppingRule,
) -> Result<BestResponse> {
    buyer_rule.check_on(tree)?;
    prev_seller_rule.check_on(tree)?;
    let aux = seller_auxiliary(tree, gcc, buyer_rule);
    response(tree, seller_valuer, aux, buyer_rule, prev_seller_rule)
}

/// Root indifference values of the stopped game payoff: what the buyer's
/// valuation assigns to receiving it and the seller's to paying it.
pub fn game_values(
    tree: &EventTree,
    gcc: &GccSpec,
    buyer_valuer: &Valuer,
    seller_valuer: &Valuer,
    tau: &StoppingRule,
    sigma: &StoppingRule,
) -> Result<(f64, f64)> {
    let r = stopped_payoff(tree, &gcc.x, &gcc.y, tau, sigma)?;
    let j_buyer = buyer_valuer.value_of_claim(&r)?;
    let minus_r = crate::tree::TerminalClaim { values: r.values.iter().map(|v| -v).collect() };
    let j_seller = seller_valuer.value_of_claim(&minus_r)?;
    Ok((j_buyer, j_seller))
}

/// One completed round of the iteration.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub round: usize,
    pub buyer_rule: StoppingRule,
    pub seller_rule: StoppingRule,
    pub buyer_tilde: StoppingRule,
    pub seller_tilde: StoppingRule,
    pub j_buyer: f64,
    pub j_seller: f64,
}

/// Result of the monotone best-response iteration.
#[derive(Debug)]
pub struct NashResult {
    pub buyer_rule: StoppingRule,
    pub seller_rule: StoppingRule,
    pub j_buyer: f64,
    pub j_seller: f64,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

fn pathwise_leq(tree: &EventTree, earlier: &StoppingRule, later: &StoppingRule) -> bool {
    let a = earlier.stop_per_terminal(tree);
    let b = later.stop_per_terminal(tree);
    a.iter()
        .zip(&b)
        .all(|(&x, &y)| tree.time_of(x) <= tree.time_of(y))
}

/// Alternating best responses from the all-horizon pair. Each player's rule
/// sequence is pathwise nonincreasing (violations indicate an implementation
/// bug and abort), so on a finite tree the iteration reaches a fixed point;
/// `max_iter` is a safety cap.
pub fn nash_iterate(
    tree: &EventTree,
    gcc: &GccSpec,
    first_mover: FirstMover,
    max_iter: usize,
) -> Result<NashResult> {
    let buyer_valuer = Valuer::new(tree, gcc.buyer.clone())?;
    let seller_valuer = Valuer::new(tree, gcc.seller.clone())?;
    let mut tau = StoppingRule::at_horizon(tree);
    let mut sigma = StoppingRule::at_horizon(tree);
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut converged = false;

    for round in 1..=max_iter {
        let (new_tau, new_sigma, tilde_tau, tilde_sigma) = match first_mover {
            FirstMover::Buyer => {
                let b = buyer_response(tree, gcc, &buyer_valuer, &sigma, &tau)?;
                let s = seller_response(tree, gcc, &seller_valuer, &b.rule, &sigma)?;
                (b.rule, s.rule, b.tilde_rule, s.tilde_rule)
            }
            FirstMover::Seller => {
                let s = seller_response(tree, gcc, &seller_valuer, &tau, &sigma)?;
                let b = buyer_response(tree, gcc, &buyer_valuer, &s.rule, &tau)?;
                (b.rule, s.rule, b.tilde_rule, s.tilde_rule)
            }
        };
        if !pathwise_leq(tree, &new_tau, &tau) || !pathwise_leq(tree, &new_sigma, &sigma) {
            return Err(SolverError::Internal(
                "best-response iteration lost pathwise monotonicity".into(),
            ));
        }
        let fixed = new_tau.same_stopping_time(&tau, tree)
            && new_sigma.same_stopping_time(&sigma, tree);
        tau = new_tau;
        sigma = new_sigma;
        let (j_buyer, j_seller) =
            game_values(tree, gcc, &buyer_valuer, &seller_valuer, &tau, &sigma)?;
        trace.push(TraceEntry {
            round,
            buyer_rule: tau.clone(),
            seller_rule: sigma.clone(),
            buyer_tilde: tilde_tau,
            seller_tilde: tilde_sigma,
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
    Ok(NashResult {
        buyer_rule: tau,
        seller_rule: sigma,
        j_buyer: last.j_buyer,
        j_seller: last.j_seller,
        trace,
        converged,
    })
}

/// Equilibrium certificate per player.
#[derive(Debug, Clone)]
pub struct NepReport {
    pub j_buyer: f64,
    pub j_seller: f64,
    /// Best value available to the deviating player minus the achieved value.
    pub buyer_gap: f64,
    pub seller_gap: f64,
}

impl NepReport {
    pub fn passed(&self) -> bool {
        self.buyer_gap <= NEP_TOL && self.seller_gap <= NEP_TOL
    }
}

/// Envelope-based verification: with the counter-party rule frozen, each
/// player's achievable optimum is the Snell root of the frozen auxiliary
/// payoff; an equilibrium achieves it.
pub fn verify_nep_snell(
    tree: &EventTree,
    gcc: &GccSpec,
    buyer_rule: &StoppingRule,
    seller_rule: &StoppingRule,
) -> Result<NepReport> {
    let buyer_valuer = Valuer::new(tree, gcc.buyer.clone())?;
    let seller_valuer = Valuer::new(tree, gcc.seller.clone())?;
    let (j_buyer, j_seller) =
        game_values(tree, gcc, &buyer_valuer, &seller_valuer, buyer_rule, seller_rule)?;
    let buyer_best = snell_envelope(&buyer_valuer, &buyer_auxiliary(tree, gcc, seller_rule))?;
    let seller_best = snell_envelope(&seller_valuer, &seller_auxiliary(tree, gcc, buyer_rule))?;
    Ok(NepReport {
        j_buyer,
        j_seller,
        buyer_gap: buyer_best.root_value - j_buyer,
        seller_gap: seller_best.root_value - j_seller,
    })
}

/// Brute-force verification: evaluates every counter-rule of each player
/// and reports the best deviation gain. Only for trees within the
/// enumeration cap.
pub fn verify_nep_exhaustive(
    tree: &EventTree,
    gcc: &GccSpec,
    buyer_rule: &StoppingRule,
    seller_rule: &StoppingRule,
    cap: usize,
) -> Result<NepReport> {
    let buyer_valuer = Valuer::new(tree, gcc.buyer.clone())?;
    let seller_valuer = Valuer::new(tree, gcc.seller.clone())?;
    let (j_buyer, j_seller) =
        game_values(tree, gcc, &buyer_valuer, &seller_valuer, buyer_rule, seller_rule)?;
    let mut best_buyer = f64::NEG_INFINITY;
    for tau in enumerate_stopping_rules_with_cap(tree, cap)? {
        let r = stopped_payoff(tree, &gcc.x, &gcc.y, &tau, seller_rule)?;
        best_buyer = best_buyer.max(buyer_valuer.value_of_claim(&r)?);
    }
    let mut best_seller = f64::NEG_INFINITY;
    for sig in enumerate_stopping_rules_with_cap(tree, cap)? {
        let r = stopped_payoff(tree, &gcc.x, &gcc.y, buyer_rule, &sig)?;
        let minus = crate::tree::TerminalClaim { values: r.values.iter().map(|v| -v).collect() };
        best_seller = best_seller.max(seller_valuer.value_of_claim(&minus)?);
    }
    Ok(NepReport {
        j_buyer,
        j_seller,
        buyer_gap: best_buyer - j_buyer,
        seller_gap: best_seller - j_seller,
    })
}

/// Complete-market degeneration report.
#[derive(Debug, Clone)]
pub struct CrosscheckReport {
    /// Value of the classical zero-sum stopping game under the unique
    /// martingale measure.
    pub game_value: f64,
    pub j_buyer: f64,
    pub j_seller: f64,
    /// Max drift of values and rule disagreement across risk-aversion
    /// scalings and endowment shifts.
    pub invariance_drift: f64,
    pub rules_invariant: bool,
}

/// On a complete tree the game is zero-sum: both players price with the
/// unique martingale measure, so the equilibrium value solves the classical
/// clamped backward recursion and depends on neither risk aversions nor
/// endowments. Checks the nonlinear solver against that.
pub fn complete_market_crosscheck(
    tree: &EventTree,
    gcc: &GccSpec,
    first_mover: FirstMover,
    max_iter: usize,
) -> Result<CrosscheckReport> {
    let core = tree.core();
    if core.asset_dim() != 1 {
        return Err(SolverError::Mismatch("complete-market check needs one traded asset".into()));
    }
    // Unique one-step martingale weights exist iff each node has exactly two
    // children with increments straddling zero.
    let mut q = vec![0.0; core.n_edges()];
    for k in 0..tree.steps() {
        for v in tree.slice(k) {
            let r = core.edge_range(v);
            if r.len() != 2 {
                return Err(SolverError::Mismatch(format!(
                    "node {v} has {} children; the market is not complete",
                    r.len()
                )));
            }
            let inc = core.increments(v);
            if !(inc[0].min(inc[1]) < 0.0 && inc[0].max(inc[1]) > 0.0) {
                return Err(SolverError::Arbitrage { node: Some(v) });
            }
            let up = -inc[1] / (inc[0] - inc[1]);
            q[r.start] = up;
            q[r.start + 1] = 1.0 - up;
        }
    }
    // Classical zero-sum recursion: clamp the continuation between exercise
    // and recall payoffs.
    let mut val = vec![0.0; tree.n_nodes()];
    for v in tree.terminal_range() {
        val[v] = gcc.x.values[v];
    }
    for k in (0..tree.steps()).rev() {
        for v in tree.slice(k) {
            let r = core.edge_range(v);
            let mut cont = 0.0;
            for e in r {
                cont += q[e] * val[core.edge_child[e] as usize];
            }
            val[v] = cont.max(gcc.x.values[v]).min(gcc.y.values[v]);
        }
    }
    let game_value = val[0];

    let base = nash_iterate(tree, gcc, first_mover, max_iter)?;
    let mut drift = (base.j_buyer - game_value)
        .abs()
        .max((base.j_seller + game_value).abs());

    // Rerun with scaled risk aversions and shifted endowments.
    let mut rules_invariant = true;
    for (scale, shift) in [(2.0, 0.0), (0.5, 1.3), (3.0, -0.8)] {
        let variant = GccSpec {
            x: gcc.x.clone(),
            y: gcc.y.clone(),
            buyer: Agent::new(
                gcc.buyer.risk_aversion * scale,
                crate::tree::TerminalClaim {
                    values: gcc.buyer.endowment.values.iter().map(|c| c + shift).collect(),
                },
            )?,
            seller: Agent::new(
                gcc.seller.risk_aversion * scale,
                crate::tree::TerminalClaim {
                    values: gcc.seller.endowment.values.iter().map(|c| c - shift).collect(),
                },
            )?,
        };
        let run = nash_iterate(tree, &variant, first_mover, max_iter)?;
        rules_invariant &= run.buyer_rule.same_stopping_time(&base.buyer_rule, tree)
            && run.seller_rule.same_stopping_time(&base.seller_rule, tree);
        drift = drift
            .max((run.j_buyer - game_value).abs())
            .max((run.j_seller + game_value).abs());
    }
    Ok(CrosscheckReport {
        game_value,
        j_buyer: base.j_buyer,
        j_seller: base.j_seller,
        invariance_drift: drift,
        rules_invariant,
    })
}
