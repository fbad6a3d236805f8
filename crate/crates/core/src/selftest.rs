//! Randomized verification suites over small incomplete markets.
//!
//! `property_suite` exercises the valuation operator's defining properties
//! (bounds, monotonicity, replication behavior, locality, time consistency,
//! continuity), the dual representation, and the envelope machinery against
//! exhaustive and two-route oracles. `game_suite` runs the best-response
//! iteration on random games and checks its monotone-convergence laws. Both
//! are deterministic per seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynkin::{
    nash_iterate, verify_nep_exhaustive, verify_nep_snell, FirstMover, GccSpec,
};
use crate::error::Result;
use crate::indifference::{endowment_identity_check, Valuer};
use crate::measure::{
    sample_martingale_measure, Agent, MartingaleMeasure,
};
use crate::onestep::logsumexp;
use crate::snell::{ratio_representation, snell_envelope};
use crate::tree::{
    build_incomplete_trinomial, enumerate_stopping_rules_with_cap, stopped_payoff, AdaptedProcess,
    CorrelationPattern, EventTree, StoppingRule, TerminalClaim, TradingStrategy,
};

/// Configuration of the randomized suites.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_trees: usize,
    pub dual_samples: usize,
    /// Deliberately breaks one input so the harness must fail (a meta-test).
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 42, n_trees: 100, dual_samples: 1000, inject_fault: false }
    }
}

/// One verified property: worst observed residual against its tolerance.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Debug, Default)]
pub struct SuiteReport {
    pub lines: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    fn record(&mut self, name: &'static str, tolerance: f64) -> &mut f64 {
        self.lines.push(CheckLine { name, worst: f64::NEG_INFINITY, tolerance });
        &mut self.lines.last_mut().unwrap().worst
    }
}

struct Residuals {
    values: Vec<f64>,
}

impl Residuals {
    fn new(n: usize) -> Self {
        Residuals { values: vec![f64::NEG_INFINITY; n] }
    }

    fn hit(&mut self, idx: usize, residual: f64) {
        if residual > self.values[idx] {
            self.values[idx] = residual;
        }
    }
}

fn random_tree<R: Rng>(rng: &mut R, max_steps: usize) -> Result<crate::tree::TrinomialModel> {
    let steps = rng.gen_range(1..=max_steps);
    let pattern = match rng.gen_range(0..3) {
        0 => CorrelationPattern::Positive,
        1 => CorrelationPattern::Negative,
        _ => CorrelationPattern::Uncorrelated,
    };
    build_incomplete_trinomial(
        steps,
        1.0,
        rng.gen_range(0.5..=1.5),
        rng.gen_range(0.3..=1.2),
        pattern,
    )
}

fn random_claim<R: Rng>(tree: &EventTree, rng: &mut R, bound: f64) -> TerminalClaim {
    TerminalClaim {
        values: (0..tree.n_terminals()).map(|_| rng.gen_range(-bound..=bound)).collect(),
    }
}

fn random_rule_after<R: Rng>(tree: &EventTree, rng: &mut R, from: usize) -> StoppingRule {
    StoppingRule::from_marks(
        tree,
        (0..tree.n_non_terminal()).filter(|&v| tree.time_of(v) >= from && rng.gen_bool(0.35)),
    )
}

/// Independent per-node entropy projection: solves the multiplier of the
/// constrained relative-entropy problem by bisection (no shared code with
/// the production one-step solver).
fn entropy_projection_oracle(
    probs: &[f64],
    incs: &[f64],
    costs: &[f64],
) -> (Vec<f64>, f64) {
    let weights = |lambda: f64| -> (Vec<f64>, f64) {
        let terms: Vec<f64> = probs
            .iter()
            .zip(costs)
            .zip(incs)
            .map(|((p, j), s)| p.ln() - j + lambda * s)
            .collect();
        let z = logsumexp(&terms);
        (terms.iter().map(|t| (t - z).exp()).collect(), z)
    };
    let drift = |lambda: f64| -> f64 {
        let (w, _) = weights(lambda);
        w.iter().zip(incs).map(|(w, s)| w * s).sum()
    };
    if incs.iter().all(|s| *s == 0.0) {
        let (w, z) = weights(0.0);
        return (w, -z);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while drift(lo) > 0.0 {
        lo *= 2.0;
    }
    while drift(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drift(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let (w, z) = weights(lambda);
    (w, -z)
}

/// Valuation-operator property suite over randomized incomplete markets.
pub fn property_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SuiteReport::default();
    // indices into the residual table
    const BOUNDED: usize = 0;
    const MONOTONE: usize = 1;
    const STRICT: usize = 2;
    const REPL_INV: usize = 3;
    const REPL_COST: usize = 4;
    const LOCAL: usize = 5;
    const TIME_CONS: usize = 6;
    const CONTINUITY: usize = 7;
    const ENDOW_IDENT: usize = 8;
    const PRIMAL_ROUTE: usize = 9;
    const DUAL_SAMPLED: usize = 10;
    const DUAL_OPT: usize = 11;
    const DUAL_BRACKET: usize = 12;
    const DUAL_ORACLE: usize = 13;
    const ENTROPY_MIN: usize = 14;
    const SNELL_EXH: usize = 15;
    const SNELL_ATTAIN: usize = 16;
    const RATIO_MATCH: usize = 17;
    const RATIO_SUPER: usize = 18;
    let mut res = Residuals::new(19);

    for tree_i in 0..cfg.n_trees {
        let model = random_tree(&mut rng, 5)?;
        let tree = &model.tree;
        let alpha = rng.gen_range(0.2..=5.0);
        let endowment = random_claim(tree, &mut rng, 2.0);
        let valuer = Valuer::new(tree, Agent::new(alpha, endowment.clone())?)?;
        let claim = random_claim(tree, &mut rng, 3.0);
        let pi = valuer.value_process(&claim)?;

        // boundedness by the claim's sup norm
        res.hit(BOUNDED, pi.sup_abs() - claim.sup_abs());

        // monotonicity: a pointwise-dominating claim prices at least as high
        let bump_scale = if cfg.inject_fault { -0.4 } else { 1.0 };
        let higher = TerminalClaim {
            values: claim
                .values
                .iter()
                .map(|v| v + bump_scale * rng.gen_range(0.0..=0.8))
                .collect(),
        };
        let pi_hi = valuer.value_process(&higher)?;
        let mut worst = f64::NEG_INFINITY;
        for v in 0..tree.n_nodes() {
            worst = worst.max(pi.values[v] - pi_hi.values[v]);
        }
        res.hit(MONOTONE, worst);

        // strict monotonicity at the root, contrapositive form: a one-sided
        // perturbation on a positive-probability set must move the root
        // value. Bumping the heaviest leaf under the claim's dual optimizer
        // keeps the margin bounded away from rounding noise (the value
        // response is at least the bump times that leaf's optimizer mass,
        // shrunk by one bounded exponential factor).
        let opt = valuer.dual_optimizer(&claim)?;
        let mut strict = claim.clone();
        let mass = tree.core().node_mass(&opt.edge_prob);
        let leaf = tree
            .terminal_range()
            .max_by(|a, b| mass[*a].partial_cmp(&mass[*b]).unwrap())
            .unwrap();
        strict.values[tree.terminal_index(leaf)] += 0.25;
        let gap = valuer.value_of_claim(&strict)? - pi.values[0];
        res.hit(STRICT, 1e-10 - gap); // requires gap > 1e-10

        // replication invariance and cost preservation at every time
        let strategy = TradingStrategy {
            holding: (0..tree.n_non_terminal() * tree.asset_dim())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect(),
        };
        for t in 0..=tree.steps() {
            let gains = strategy.gains_from(tree, t);
            let shift: Vec<f64> = tree.slice(t).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let slice_start = tree.slice(t).start;
            // lift the time-t amount to the terminal slice
            let mut anchor = vec![0usize; tree.n_nodes()];
            for v in 0..tree.n_nodes() {
                anchor[v] = match tree.parent(v) {
                    Some(p) if tree.time_of(v) > t => anchor[p],
                    _ => v,
                };
            }
            let assembled = TerminalClaim {
                values: tree
                    .terminal_range()
                    .map(|v| {
                        claim.values[tree.terminal_index(v)]
                            + shift[anchor[v] - slice_start]
                            + gains.values[v]
                    })
                    .collect(),
            };
            let pi_shift = valuer.value_process(&assembled)?;
            for v in tree.slice(t) {
                let expect = pi.values[v] + shift[v - slice_start];
                res.hit(REPL_INV, (pi_shift.values[v] - expect).abs());
            }
            let pure = TerminalClaim {
                values: tree
                    .terminal_range()
                    .map(|v| shift[anchor[v] - slice_start] + gains.values[v])
                    .collect(),
            };
            let pi_pure = valuer.value_process(&pure)?;
            for v in tree.slice(t) {
                res.hit(REPL_COST, (pi_pure.values[v] - shift[v - slice_start]).abs());
            }

            // local property: splice two claims along a union of time-t nodes
            let other = random_claim(tree, &mut rng, 3.0);
            let pi_other = valuer.value_process(&other)?;
            let chosen: Vec<bool> = tree.slice(t).map(|_| rng.gen_bool(0.5)).collect();
            let spliced = TerminalClaim {
                values: tree
                    .terminal_range()
                    .map(|v| {
                        if chosen[anchor[v] - slice_start] {
                            claim.values[tree.terminal_index(v)]
                        } else {
                            other.values[tree.terminal_index(v)]
                        }
                    })
                    .collect(),
            };
            let pi_spliced = valuer.value_process(&spliced)?;
            for v in tree.slice(t) {
                let expect =
                    if chosen[v - slice_start] { pi.values[v] } else { pi_other.values[v] };
                res.hit(LOCAL, (pi_spliced.values[v] - expect).abs());
            }

            // stopping-time consistency: revaluing the value read at a later
            // rule reproduces the process
            let sigma = random_rule_after(tree, &mut rng, t);
            let relift = sigma.lift_stopped(tree, &pi);
            let pi_relift = valuer.value_process(&relift)?;
            for v in tree.slice(t) {
                res.hit(TIME_CONS, (pi_relift.values[v] - pi.values[v]).abs());
            }
        }

        // sup-norm continuity bound
        let eps = rng.gen_range(0.01..=0.5);
        let direction = random_claim(tree, &mut rng, 1.0);
        let moved = TerminalClaim {
            values: claim
                .values
                .iter()
                .zip(&direction.values)
                .map(|(h, g)| h + eps * g)
                .collect(),
        };
        let drift = (valuer.value_of_claim(&moved)? - pi.values[0]).abs();
        res.hit(CONTINUITY, drift - eps * direction.sup_abs());

        // endowment reduction identity
        let scale = 1.0 + claim.sup_abs() + endowment.sup_abs();
        let ident = endowment_identity_check(tree, alpha, &endowment, &claim)?;
        res.hit(ENDOW_IDENT, ident / scale);

        // primal two-program route agrees with the pricing-measure route
        let primal = valuer.value_process_primal(&claim)?;
        for v in 0..tree.n_nodes() {
            res.hit(PRIMAL_ROUTE, (pi.values[v] - primal.values[v]).abs());
        }

        // dual representation: sampled measures never undershoot, the
        // assembled optimizer attains, and entropy is minimal at the pricing
        // measure
        let tilted = valuer.tilted_weights().weights.clone();
        let pricing = valuer.pricing_measure();
        let samples_here = (cfg.dual_samples / 2).max(1);
        let mut min_gap = f64::INFINITY;
        for _ in 0..samples_here {
            let q = sample_martingale_measure(tree.core(), &tilted, 0.9, &mut rng)?;
            let entropy = crate::measure::relative_entropy(tree.core(), &tilted, &q);
            let m = MartingaleMeasure { edge_prob: q, relative_entropy: entropy, density_to_base: vec![] };
            let gap = valuer.dual_gap(&claim, &m)?;
            min_gap = min_gap.min(gap);
            res.hit(DUAL_SAMPLED, -gap);
            res.hit(ENTROPY_MIN, pricing.relative_entropy - entropy);
        }
        res.hit(DUAL_OPT, valuer.dual_gap(&claim, &opt)?.abs());
        for _ in 0..samples_here {
            let q = sample_martingale_measure(tree.core(), &opt.edge_prob, 0.02, &mut rng)?;
            let entropy = crate::measure::relative_entropy(tree.core(), &tilted, &q);
            let m = MartingaleMeasure { edge_prob: q, relative_entropy: entropy, density_to_base: vec![] };
            let gap = valuer.dual_gap(&claim, &m)?;
            min_gap = min_gap.min(gap);
            res.hit(DUAL_SAMPLED, -gap);
        }
        res.hit(DUAL_BRACKET, min_gap);

        // per-node duality identity against the independent bisection oracle
        let core = tree.core();
        let (q_prod, j_prod) = crate::dp::emmm_weights(core, &tilted)?;
        for k in (0..tree.steps()).rev() {
            for v in tree.slice(k) {
                let r = core.edge_range(v);
                let costs: Vec<f64> =
                    r.clone().map(|e| j_prod[core.edge_child[e] as usize]).collect();
                let (w_oracle, j_oracle) =
                    entropy_projection_oracle(&tilted[r.clone()], core.increments(v), &costs);
                res.hit(DUAL_ORACLE, (j_oracle - j_prod[v]).abs());
                for (i, e) in r.enumerate() {
                    res.hit(DUAL_ORACLE, (w_oracle[i] - q_prod[e]).abs());
                }
            }
        }

        // envelope optimality against exhaustive enumeration, and the ratio
        // representation as an independent second algorithm
        let payoff = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-3.0..=3.0));
        let envelope = snell_envelope(&valuer, &payoff)?;
        if tree.n_non_terminal() <= 16 {
            let mut best = f64::NEG_INFINITY;
            for rule in enumerate_stopping_rules_with_cap(tree, 16)? {
                best = best.max(valuer.value_at(&payoff, &rule)?);
            }
            res.hit(SNELL_EXH, (envelope.root_value - best).abs());
            let attained = valuer.value_at(&payoff, &envelope.optimal_rule)?;
            res.hit(SNELL_ATTAIN, (attained - envelope.root_value).abs());
        }
        let ratio = ratio_representation(&valuer, &payoff)?;
        for v in 0..tree.n_nodes() {
            res.hit(RATIO_MATCH, (ratio.process.values[v] - envelope.envelope.values[v]).abs());
        }
        res.hit(RATIO_SUPER, ratio.stop_part_violation.max(ratio.investment_part_violation));

        // spread the RNG state so trees differ even if a check short-circuits
        let _ = tree_i;
    }

    *report.record("value bounded by claim sup-norm", 1e-9) = res.values[BOUNDED];
    *report.record("monotone in the claim", 1e-9) = res.values[MONOTONE];
    *report.record("strictly monotone at the root", 0.0) = res.values[STRICT];
    *report.record("replication invariance", 1e-9) = res.values[REPL_INV];
    *report.record("replication cost preservation", 1e-9) = res.values[REPL_COST];
    *report.record("local property on time slices", 1e-9) = res.values[LOCAL];
    *report.record("stopping-time consistency", 1e-9) = res.values[TIME_CONS];
    *report.record("sup-norm continuity bound", 1e-9) = res.values[CONTINUITY];
    *report.record("endowment reduction identity", 1e-9) = res.values[ENDOW_IDENT];
    *report.record("primal route agreement", 1e-9) = res.values[PRIMAL_ROUTE];
    *report.record("dual gap nonnegative over samples", 1e-8) = res.values[DUAL_SAMPLED];
    *report.record("dual gap zero at the optimizer", 1e-8) = res.values[DUAL_OPT];
    *report.record("sampling brackets the dual optimizer", 1e-3) = res.values[DUAL_BRACKET];
    *report.record("pricing weights match entropy oracle", 1e-9) = res.values[DUAL_ORACLE];
    *report.record("pricing measure minimizes entropy", 1e-12) = res.values[ENTROPY_MIN];
    *report.record("envelope equals exhaustive optimum", 1e-9) = res.values[SNELL_EXH];
    *report.record("hitting rule attains the optimum", 1e-9) = res.values[SNELL_ATTAIN];
    *report.record("ratio route matches the envelope", 1e-9) = res.values[RATIO_MATCH];
    *report.record("ratio parts stay supermartingales", 1e-10) = res.values[RATIO_SUPER];
    Ok(report)
}

/// Best-response iteration suite over random games.
pub fn game_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut report = SuiteReport::default();
    let mut monotone = f64::NEG_INFINITY; // 0 when all traces monotone
    let mut cap_margin = f64::NEG_INFINITY; // rounds used minus theoretical cap
    let mut lemma_simultaneous = f64::NEG_INFINITY;
    let mut lemma_interleave = f64::NEG_INFINITY;
    let mut best_response_gap = f64::NEG_INFINITY;
    let mut fixed_point_gap = f64::NEG_INFINITY;
    let mut snell_cert_gap = f64::NEG_INFINITY;

    for _ in 0..cfg.n_trees {
        let model = random_tree(&mut rng, 3)?;
        let tree = &model.tree;
        let x = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
        let y = AdaptedProcess::from_fn(tree, |v| x.values[v] + rng.gen_range(0.0..=1.5));
        let buyer = Agent::new(rng.gen_range(0.2..=5.0), random_claim(tree, &mut rng, 1.5))?;
        let seller = Agent::new(rng.gen_range(0.2..=5.0), random_claim(tree, &mut rng, 1.5))?;
        let gcc = GccSpec::new(tree, x, y, buyer, seller)?;
        let mover =
            if rng.gen_bool(0.5) { FirstMover::Buyer } else { FirstMover::Seller };
        let cap = (tree.steps() + 1) * tree.n_nodes();
        let run = nash_iterate(tree, &gcc, mover, cap)?;
        cap_margin = cap_margin.max(run.trace.len() as f64 - cap as f64);

        // pathwise monotonicity over the same-player subsequences
        let times = |rule: &StoppingRule| -> Vec<usize> {
            rule.stop_per_terminal(tree).iter().map(|&s| tree.time_of(s)).collect()
        };
        let horizon = StoppingRule::at_horizon(tree);
        let mut buyer_seq = vec![times(&horizon)];
        let mut seller_seq = vec![times(&horizon)];
        for e in &run.trace {
            buyer_seq.push(times(&e.buyer_rule));
            seller_seq.push(times(&e.seller_rule));
        }
        for seq in [&buyer_seq, &seller_seq] {
            for w in seq.windows(2) {
                for (later, earlier) in w[0].iter().zip(&w[1]) {
                    monotone = monotone.max(*earlier as f64 - *later as f64);
                }
            }
        }

        // interleaved-order laws: simultaneous stops force earlier rules to
        // the horizon, and a strictly later counter-party stop bounds the
        // next capped hit
        let mut seq: Vec<&StoppingRule> = vec![&horizon, &horizon];
        let mut tildes: Vec<Option<&StoppingRule>> = vec![None, None];
        for e in &run.trace {
            match mover {
                FirstMover::Buyer => {
                    seq.push(&e.buyer_rule);
                    tildes.push(Some(&e.buyer_tilde));
                    seq.push(&e.seller_rule);
                    tildes.push(Some(&e.seller_tilde));
                }
                FirstMover::Seller => {
                    seq.push(&e.seller_rule);
                    tildes.push(Some(&e.seller_tilde));
                    seq.push(&e.buyer_rule);
                    tildes.push(Some(&e.buyer_tilde));
                }
            }
        }
        let seq_times: Vec<Vec<usize>> = seq.iter().map(|r| times(r)).collect();
        let n_term = tree.n_terminals();
        for n in 0..seq.len() - 1 {
            for path in 0..n_term {
                if seq_times[n + 1][path] == seq_times[n][path]
                    && seq_times[n][path] < tree.steps()
                {
                    for m in 0..=n {
                        lemma_simultaneous = lemma_simultaneous
                            .max(tree.steps() as f64 - seq_times[m][path] as f64);
                    }
                }
            }
        }
        for n in 0..seq.len() - 2 {
            if let Some(tilde) = tildes[n + 2] {
                let tilde_times = times(tilde);
                for path in 0..n_term {
                    if seq_times[n][path] < seq_times[n + 1][path] {
                        lemma_interleave = lemma_interleave
                            .max(tilde_times[path] as f64 - seq_times[n][path] as f64);
                    }
                }
            }
        }

        // best-response optimality of every iterate, exhaustively
        if tree.n_non_terminal() <= 16 {
            let buyer_valuer = Valuer::new(tree, gcc.buyer.clone())?;
            let seller_valuer = Valuer::new(tree, gcc.seller.clone())?;
            let mut prev_sigma = horizon.clone();
            let mut prev_tau = horizon.clone();
            for e in &run.trace {
                // the rule each response was computed against
                let buyer_counter = match mover {
                    FirstMover::Buyer => &prev_sigma,
                    FirstMover::Seller => &e.seller_rule,
                };
                let seller_counter = match mover {
                    FirstMover::Buyer => &e.buyer_rule,
                    FirstMover::Seller => &prev_tau,
                };
                let r = stopped_payoff(tree, &gcc.x, &gcc.y, &e.buyer_rule, buyer_counter)?;
                let achieved = buyer_valuer.value_of_claim(&r)?;
                for rule in enumerate_stopping_rules_with_cap(tree, 16)? {
                    let alt = stopped_payoff(tree, &gcc.x, &gcc.y, &rule, buyer_counter)?;
                    best_response_gap = best_response_gap
                        .max(buyer_valuer.value_of_claim(&alt)? - achieved);
                }
                let r = stopped_payoff(tree, &gcc.x, &gcc.y, seller_counter, &e.seller_rule)?;
                let minus = TerminalClaim { values: r.values.iter().map(|v| -v).collect() };
                let achieved = seller_valuer.value_of_claim(&minus)?;
                for rule in enumerate_stopping_rules_with_cap(tree, 16)? {
                    let alt = stopped_payoff(tree, &gcc.x, &gcc.y, seller_counter, &rule)?;
                    let alt = TerminalClaim { values: alt.values.iter().map(|v| -v).collect() };
                    best_response_gap = best_response_gap
                        .max(seller_valuer.value_of_claim(&alt)? - achieved);
                }
                prev_sigma = e.seller_rule.clone();
                prev_tau = e.buyer_rule.clone();
            }

            // the converged pair is a fixed point and an equilibrium
            let rep =
                verify_nep_exhaustive(tree, &gcc, &run.buyer_rule, &run.seller_rule, 16)?;
            fixed_point_gap = fixed_point_gap.max(rep.buyer_gap).max(rep.seller_gap);
        }
        let rep = verify_nep_snell(tree, &gcc, &run.buyer_rule, &run.seller_rule)?;
        snell_cert_gap = snell_cert_gap.max(rep.buyer_gap).max(rep.seller_gap);
    }

    *report.record("stop times pathwise nonincreasing", 0.0) = monotone;
    *report.record("convergence within the theoretical cap", 0.0) = cap_margin;
    *report.record("simultaneous stops imply horizon history", 0.0) = lemma_simultaneous;
    *report.record("late counter-stops bound the capped hit", 0.0) = lemma_interleave;
    *report.record("iterates are exhaustive best responses", 1e-9) = best_response_gap;
    *report.record("converged pair passes exhaustive check", 1e-9) = fixed_point_gap;
    *report.record("converged pair passes envelope check", 1e-9) = snell_cert_gap;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_property_suite_passes() {
        let cfg = SuiteConfig { seed: 7, n_trees: 6, dual_samples: 60, inject_fault: false };
        let report = property_suite(&cfg).unwrap();
        for line in &report.lines {
            assert!(line.passed(), "{}: worst {} > {}", line.name, line.worst, line.tolerance);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let cfg = SuiteConfig { seed: 7, n_trees: 3, dual_samples: 20, inject_fault: true };
        let report = property_suite(&cfg).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn small_game_suite_passes() {
        let cfg = SuiteConfig { seed: 11, n_trees: 8, dual_samples: 0, inject_fault: false };
        let report = game_suite(&cfg).unwrap();
        for line in &report.lines {
            assert!(line.passed(), "{}: worst {} > {}", line.name, line.worst, line.tolerance);
        }
    }
}
