//! Nonlinear Snell envelope under indifference valuation and the
//! ratio-of-supermartingales representation.

use crate::dp;
use crate::error::{Result, SolverError};
use crate::indifference::Valuer;
use crate::tree::{hitting_rule, hitting_tolerance, AdaptedProcess, StoppingRule};

/// Envelope, optimal rule and root value of an optimal-stopping problem.
#[derive(Debug, Clone)]
pub struct SnellResult {
    pub envelope: AdaptedProcess,
    pub optimal_rule: StoppingRule,
    pub root_value: f64,
}

/// Smallest indifference-supermartingale dominating the payoff process:
/// backward recursion `V_T = L_T`, `V_t = max(L_t, one-step value of
/// V_{t+1})` under the agent's pricing measure. The optimal rule is the
/// first time the envelope touches the payoff.
pub fn snell_envelope(valuer: &Valuer, payoff: &AdaptedProcess) -> Result<SnellResult> {
    let tree = valuer.tree();
    payoff.check_on(tree)?;
    let values = dp::snell_values(
        tree.core(),
        &valuer.pricing_measure().edge_prob,
        valuer.alpha(),
        &payoff.values,
        None,
    )?;
    let envelope = AdaptedProcess { values };
    let optimal_rule = hitting_rule(tree, &envelope, payoff, hitting_tolerance(payoff.sup_abs()))?;
    let root_value = envelope.values[0];
    Ok(SnellResult { envelope, optimal_rule, root_value })
}

/// Max over nodes and sampled rules of `pi_t(V at rule) - V_t`, restricted to
/// nodes the rule has not already passed. Nonpositive up to tolerance for a
/// genuine envelope.
pub fn check_supermartingale(
    valuer: &Valuer,
    result: &SnellResult,
    rules: &[StoppingRule],
) -> Result<f64> {
    let tree = valuer.tree();
    let mut worst = f64::NEG_INFINITY;
    for rule in rules {
        rule.check_on(tree)?;
        let lifted = rule.lift_stopped(tree, &result.envelope);
        let pi = valuer.value_process(&lifted)?;
        let first = rule.first_stop(tree);
        for v in 0..tree.n_nodes() {
            // Skip nodes the rule stopped strictly before: there the stopped
            // value is no longer a time-v quantity.
            let passed = match tree.parent(v) {
                Some(p) => first[p] != crate::tree::NO_NODE,
                None => false,
            };
            if passed {
                continue;
            }
            worst = worst.max(pi.values[v] - result.envelope.values[v]);
        }
    }
    Ok(worst)
}

/// True iff the envelopes of two payoffs agreeing at and after `sigma` agree
/// there as well. The precondition (payoff equality on that region) is
/// checked and violations are an error.
pub fn restriction_check(
    valuer: &Valuer,
    payoff_a: &AdaptedProcess,
    payoff_b: &AdaptedProcess,
    sigma: &StoppingRule,
) -> Result<bool> {
    let tree = valuer.tree();
    payoff_a.check_on(tree)?;
    payoff_b.check_on(tree)?;
    sigma.check_on(tree)?;
    let first = sigma.first_stop(tree);
    for v in 0..tree.n_nodes() {
        if first[v] != crate::tree::NO_NODE && (payoff_a.values[v] - payoff_b.values[v]).abs() > 0.0
        {
            return Err(SolverError::Mismatch(format!(
                "payoffs differ at node {v}, which is at or after the stopping rule"
            )));
        }
    }
    let va = snell_envelope(valuer, payoff_a)?;
    let vb = snell_envelope(valuer, payoff_b)?;
    Ok((0..tree.n_nodes())
        .filter(|&v| first[v] != crate::tree::NO_NODE)
        .all(|v| (va.envelope.values[v] - vb.envelope.values[v]).abs() <= 1e-12))
}

/// The ratio representation of the American indifference value together with
/// the supermartingale diagnostics of its two building blocks.
#[derive(Debug, Clone)]
pub struct RatioRepresentation {
    pub process: AdaptedProcess,
    /// Max log-domain violation of the supermartingale property of the
    /// combined trade-and-stop utility process.
    pub stop_part_violation: f64,
    /// Same for the pure-investment utility process.
    pub investment_part_violation: f64,
}

/// Computes the American indifference value as the log-ratio of the combined
/// trade-and-stop utility program and the pure-investment program, both
/// under the physical measure. Errors if either part fails its
/// supermartingale inequality beyond 1e-10.
pub fn ratio_representation(valuer: &Valuer, payoff: &AdaptedProcess) -> Result<RatioRepresentation> {
    let tree = valuer.tree();
    payoff.check_on(tree)?;
    let core = tree.core();
    let alpha = valuer.alpha();

    // Pure investment with the agent's endowment, in certainty-equivalent form.
    let invest = dp::european_values(core, &core.edge_prob, alpha, &valuer.agent().endowment.values)?;
    // Combined trade-and-stop program: stopping at v collects the payoff and
    // the remaining pure-investment value.
    let running: Vec<f64> = (0..tree.n_nodes())
        .map(|v| payoff.values[v] + invest[v])
        .collect();
    let combined = dp::snell_values(core, &core.edge_prob, alpha, &running, None)?;

    let stop_part_violation = dp::supermartingale_violation(core, &core.edge_prob, alpha, &combined);
    let investment_part_violation =
        dp::supermartingale_violation(core, &core.edge_prob, alpha, &invest);
    if stop_part_violation > 1e-10 || investment_part_violation > 1e-10 {
        return Err(SolverError::Internal(format!(
            "ratio parts violate the supermartingale property: {stop_part_violation:.3e}, {investment_part_violation:.3e}"
        )));
    }
    let process = AdaptedProcess {
        values: combined.iter().zip(&invest).map(|(a, b)| a - b).collect(),
    };
    Ok(RatioRepresentation { process, stop_part_violation, investment_part_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Agent;
    use crate::tree::{
        build_binomial, build_incomplete_trinomial, enumerate_stopping_rules, BinomialSpec,
        CorrelationPattern, EventTree, TerminalClaim,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binom(steps: usize, traded: bool) -> crate::tree::BinomialModel {
        build_binomial(&BinomialSpec {
            steps,
            horizon_years: 1.0,
            drift: 0.0,
            vol: 1.0,
            traded,
        })
        .unwrap()
    }

    fn plain_valuer(tree: &EventTree, alpha: f64) -> Valuer<'_> {
        Valuer::new(tree, Agent::without_endowment(tree, alpha).unwrap()).unwrap()
    }

    #[test]
    fn constant_payoff_stops_at_root() {
        let m = binom(3, false);
        let valuer = plain_valuer(&m.tree, 1.0);
        let l = AdaptedProcess::constant(&m.tree, 2.0);
        let r = snell_envelope(&valuer, &l).unwrap();
        assert!((r.root_value - 2.0).abs() < 1e-12);
        assert_eq!(r.optimal_rule.canonical_stops(&m.tree), vec![0]);
        for v in r.envelope.values {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_increasing_payoff_waits_to_horizon() {
        let m = binom(3, false);
        let tree = &m.tree;
        let valuer = plain_valuer(tree, 2.0);
        let l = AdaptedProcess::from_fn(tree, |v| tree.time_of(v) as f64);
        let r = snell_envelope(&valuer, &l).unwrap();
        assert!((r.root_value - 3.0).abs() < 1e-12);
        assert_eq!(
            r.optimal_rule.canonical_stops(tree),
            tree.terminal_range().collect::<Vec<_>>()
        );
        for v in 0..tree.n_nodes() {
            assert!((r.envelope.values[v] - 3.0).abs() < 1e-12);
        }
    }

    /// Classical risk-neutral Snell recursion, written independently as the
    /// oracle for complete trees.
    fn classical_snell(tree: &EventTree, payoff: &AdaptedProcess) -> (Vec<f64>, Vec<bool>) {
        let core = tree.core();
        let mut v = vec![0.0; tree.n_nodes()];
        for n in tree.terminal_range() {
            v[n] = payoff.values[n];
        }
        for k in (0..tree.steps()).rev() {
            for n in tree.slice(k) {
                // unique martingale weights for two children
                let incs = core.increments(n);
                let q = -incs[1] / (incs[0] - incs[1]);
                let kids = core.children(n);
                let cont = q * v[kids[0] as usize] + (1.0 - q) * v[kids[1] as usize];
                v[n] = payoff.values[n].max(cont);
            }
        }
        let stops = (0..tree.n_nodes())
            .map(|n| v[n] - payoff.values[n] <= 1e-11)
            .collect();
        (v, stops)
    }

    #[test]
    fn american_put_matches_classical_oracle() {
        let m = build_binomial(&BinomialSpec {
            steps: 6,
            horizon_years: 1.0,
            drift: 0.0,
            vol: 0.4,
            traded: true,
        })
        .unwrap();
        let tree = &m.tree;
        // arithmetic underlying s = 1 + W, strike 1
        let put = AdaptedProcess::from_fn(tree, |v| (1.0 - (1.0 + m.walk.values[v])).max(0.0));
        let (oracle, oracle_stop) = classical_snell(tree, &put);
        for alpha in [0.5, 2.0] {
            let valuer = plain_valuer(tree, alpha);
            let r = snell_envelope(&valuer, &put).unwrap();
            for v in 0..tree.n_nodes() {
                assert!(
                    (r.envelope.values[v] - oracle[v]).abs() < 1e-10,
                    "node {v}: {} vs {}",
                    r.envelope.values[v],
                    oracle[v]
                );
                assert_eq!(r.optimal_rule.stop[v], oracle_stop[v], "node {v}");
            }
        }
    }

    #[test]
    fn root_value_attains_exhaustive_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = build_incomplete_trinomial(2, 1.0, 1.0, 0.7, CorrelationPattern::Positive).unwrap();
        let tree = &m.tree;
        for _ in 0..4 {
            let alpha = rng.gen_range(0.3..=4.0);
            let endow = TerminalClaim {
                values: (0..tree.n_terminals()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            };
            let valuer = Valuer::new(tree, Agent::new(alpha, endow).unwrap()).unwrap();
            let l = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
            let r = snell_envelope(&valuer, &l).unwrap();
            let mut best = f64::NEG_INFINITY;
            for rule in enumerate_stopping_rules(tree).unwrap() {
                best = best.max(valuer.value_at(&l, &rule).unwrap());
            }
            assert!((r.root_value - best).abs() < 1e-9, "{} vs {}", r.root_value, best);
            let attained = valuer.value_at(&l, &r.optimal_rule).unwrap();
            assert!((attained - r.root_value).abs() < 1e-9);
            // domination
            for v in 0..tree.n_nodes() {
                assert!(r.envelope.values[v] >= l.values[v] - 1e-12);
            }
        }
    }

    #[test]
    fn supermartingale_property_over_random_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = build_incomplete_trinomial(3, 1.0, 1.0, 0.5, CorrelationPattern::Uncorrelated)
            .unwrap();
        let tree = &m.tree;
        let valuer = plain_valuer(tree, 1.5);
        let l = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
        let r = snell_envelope(&valuer, &l).unwrap();

        // stopping immediately reproduces the envelope
        let now = StoppingRule::at_root(tree);
        let g = check_supermartingale(&valuer, &r, &[now]).unwrap();
        assert!(g.abs() < 1e-12);

        // the optimal rule achieves equality before the exercise boundary
        let lifted = r.optimal_rule.lift_stopped(tree, &r.envelope);
        let pi = valuer.value_process(&lifted).unwrap();
        let first = r.optimal_rule.first_stop(tree);
        for v in 0..tree.n_nodes() {
            if first[v] == crate::tree::NO_NODE || first[v] == v as u32 {
                assert!((pi.values[v] - r.envelope.values[v]).abs() < 1e-9, "node {v}");
            }
        }

        // random rules never beat the envelope
        let rules: Vec<StoppingRule> = (0..200)
            .map(|_| {
                StoppingRule::from_marks(
                    tree,
                    (0..tree.n_non_terminal()).filter(|_| rng.gen_bool(0.3)),
                )
            })
            .collect();
        let g = check_supermartingale(&valuer, &r, &rules).unwrap();
        assert!(g <= 1e-9, "violation {g}");
    }

    #[test]
    fn restriction_and_absorption() {
        let m = binom(3, false);
        let tree = &m.tree;
        let valuer = plain_valuer(tree, 1.0);
        let l1 = AdaptedProcess::from_fn(tree, |v| m.walk.values[v]);
        // sigma stops at time 1; payoffs differ only strictly before
        let sigma = StoppingRule::from_marks(tree, tree.slice(1));
        let mut l2 = l1.clone();
        l2.values[0] += 5.0;
        assert!(restriction_check(&valuer, &l1, &l2, &sigma).unwrap());
        // equal payoffs, sigma at root
        assert!(restriction_check(&valuer, &l1, &l1, &StoppingRule::at_root(tree)).unwrap());
        // precondition violation is an error
        let mut l3 = l1.clone();
        l3.values[1] += 1.0;
        assert!(restriction_check(&valuer, &l1, &l3, &sigma).is_err());

        // absorption: payoff frozen from sigma on forces envelope = payoff there
        let first = sigma.first_stop(tree);
        let frozen = AdaptedProcess::from_fn(tree, |v| {
            if first[v] != crate::tree::NO_NODE {
                l1.values[first[v] as usize]
            } else {
                l1.values[v]
            }
        });
        let r = snell_envelope(&valuer, &frozen).unwrap();
        for v in tree.slice(1) {
            assert!((r.envelope.values[v] - frozen.values[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_representation_matches_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let m = build_incomplete_trinomial(4, 1.0, 1.0, 0.8, CorrelationPattern::Positive).unwrap();
        let tree = &m.tree;

        let valuer = plain_valuer(tree, 1.0);
        let zero = AdaptedProcess::constant(tree, 0.0);
        let r = ratio_representation(&valuer, &zero).unwrap();
        assert!(r.process.values.iter().all(|v| v.abs() < 1e-12));
        let c = AdaptedProcess::constant(tree, 1.3);
        let r = ratio_representation(&valuer, &c).unwrap();
        assert!(r.process.values.iter().all(|v| (v - 1.3).abs() < 1e-12));

        let endow = TerminalClaim {
            values: (0..tree.n_terminals()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        };
        let valuer = Valuer::new(tree, Agent::new(1.7, endow).unwrap()).unwrap();
        let l = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
        let envelope = snell_envelope(&valuer, &l).unwrap();
        let ratio = ratio_representation(&valuer, &l).unwrap();
        for v in 0..tree.n_nodes() {
            assert!(
                (ratio.process.values[v] - envelope.envelope.values[v]).abs() < 1e-9,
                "node {v}: {} vs {}",
                ratio.process.values[v],
                envelope.envelope.values[v]
            );
        }
        assert!(ratio.stop_part_violation <= 1e-10);
        assert!(ratio.investment_part_violation <= 1e-10);
    }

    #[test]
    fn envelope_monotone_in_payoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let m = build_incomplete_trinomial(3, 1.0, 1.0, 0.5, CorrelationPattern::Negative).unwrap();
        let tree = &m.tree;
        let valuer = plain_valuer(tree, 0.8);
        let l1 = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
        let l2 = AdaptedProcess::from_fn(tree, |v| l1.values[v] + rng.gen_range(0.0..=1.0));
        let r1 = snell_envelope(&valuer, &l1).unwrap();
        let r2 = snell_envelope(&valuer, &l2).unwrap();
        for v in 0..tree.n_nodes() {
            assert!(r1.envelope.values[v] <= r2.envelope.values[v] + 1e-12);
        }
    }
}
