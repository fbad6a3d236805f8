//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use gccsolver::measure::{tilt_measure, Agent};
use gccsolver::indifference::Valuer;
use gccsolver::onestep::one_step_ce;
use gccsolver::snell::snell_envelope;
use gccsolver::tree::{
    build_binomial, enumerate_stopping_rules, hitting_rule, stopped_payoff, AdaptedProcess,
    BinomialSpec, StoppingRule, TerminalClaim,
};

fn probs3() -> impl Strategy<Value = [f64; 3]> {
    (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        [a / s, b / s, c / s]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Adding cash to every branch adds exactly that cash to the certainty
    /// equivalent; raising any branch never lowers it.
    #[test]
    fn one_step_cash_invariance_and_monotonicity(
        probs in probs3(),
        values in prop::array::uniform3(-3.0f64..3.0),
        up in 0.1f64..2.0,
        cash in -4.0f64..4.0,
        alpha in 0.2f64..5.0,
        raise_idx in 0usize..3,
        raise in 0.0f64..1.5,
    ) {
        let incs = [up, 0.0, -up];
        let base = one_step_ce(&probs, &incs, 1, &values, alpha).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + cash).collect();
        let s = one_step_ce(&probs, &incs, 1, &shifted, alpha).unwrap();
        prop_assert!((s.certainty_equivalent - base.certainty_equivalent - cash).abs() < 1e-12);

        let mut raised = values;
        raised[raise_idx] += raise;
        let r = one_step_ce(&probs, &incs, 1, &raised, alpha).unwrap();
        prop_assert!(r.certainty_equivalent >= base.certainty_equivalent - 1e-12);

        // dual weights are a one-step martingale measure
        let resid: f64 = base.dual_weights.iter().zip(&incs).map(|(w, s)| w * s).sum();
        prop_assert!(resid.abs() < 1e-10 * up.max(1.0));
    }

    /// Stopped game payoffs live between the payoff bounds, for any rule pair.
    #[test]
    fn stopped_payoff_within_bounds(
        steps in 1usize..4,
        tau_mask in 0u64..128,
        sigma_mask in 0u64..128,
        penalty in 0.0f64..1.0,
    ) {
        let m = build_binomial(&BinomialSpec {
            steps,
            horizon_years: 1.0,
            drift: 0.0,
            vol: 1.0,
            traded: false,
        }).unwrap();
        let tree = &m.tree;
        let x = m.walk.clone();
        let y = AdaptedProcess::from_fn(tree, |v| x.values[v] + penalty);
        let n = tree.n_non_terminal() as u64;
        let tau = StoppingRule::from_marks(tree, (0..tree.n_non_terminal())
            .filter(|i| tau_mask % (1 << n) >> i & 1 == 1));
        let sigma = StoppingRule::from_marks(tree, (0..tree.n_non_terminal())
            .filter(|i| sigma_mask % (1 << n) >> i & 1 == 1));
        let claim = stopped_payoff(tree, &x, &y, &tau, &sigma).unwrap();
        let lo = x.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &v in &claim.values {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    /// Tilted transition weights stay normalized, and a constant endowment
    /// leaves them untouched.
    #[test]
    fn tilt_normalization(
        steps in 1usize..4,
        alpha in 0.2f64..5.0,
        scale in 0.0f64..2.0,
    ) {
        let m = build_binomial(&BinomialSpec {
            steps, horizon_years: 1.0, drift: 0.0, vol: 1.0, traded: false,
        }).unwrap();
        let tree = &m.tree;
        let endow = TerminalClaim {
            values: tree.terminal_range().map(|v| scale * m.walk.values[v]).collect(),
        };
        let tilt = tilt_measure(tree, &endow, alpha).unwrap();
        for k in 0..tree.steps() {
            for v in tree.slice(k) {
                let s: f64 = tree.core().edge_range(v).map(|e| tilt.weights[e]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let flat = tilt_measure(tree, &TerminalClaim::constant(tree, 1.3), alpha).unwrap();
        for e in 0..tree.core().n_edges() {
            prop_assert!((flat.weights[e] - tree.core().edge_probabilities()[e]).abs() < 1e-13);
        }
    }

    /// Stopping the envelope at its hitting rule reads the payoff there:
    /// the envelope and payoff coincide at every effective stop.
    #[test]
    fn hitting_rule_reads_the_payoff(
        steps in 1usize..4,
        alpha in 0.2f64..5.0,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let m = build_binomial(&BinomialSpec {
            steps, horizon_years: 1.0, drift: 0.0, vol: 1.0, traded: false,
        }).unwrap();
        let tree = &m.tree;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let payoff = AdaptedProcess::from_fn(tree, |_| rng.gen_range(-2.0..=2.0));
        let valuer = Valuer::new(tree, Agent::without_endowment(tree, alpha).unwrap()).unwrap();
        let snell = snell_envelope(&valuer, &payoff).unwrap();
        let tol = 1e-9 * (1.0 + payoff.sup_abs());
        let rule = hitting_rule(tree, &snell.envelope, &payoff, tol).unwrap();
        for stop in rule.canonical_stops(tree) {
            prop_assert!((snell.envelope.values[stop] - payoff.values[stop]).abs() <= tol);
        }
        // the lifted stopped envelope equals the lifted stopped payoff
        let via_envelope = rule.lift_stopped(tree, &snell.envelope);
        let via_payoff = rule.lift_stopped(tree, &payoff);
        for (a, b) in via_envelope.values.iter().zip(&via_payoff.values) {
            prop_assert!((a - b).abs() <= tol);
        }
    }

    /// Enumeration yields exactly 2^(non-terminal) distinct rules with every
    /// terminal node marked.
    #[test]
    fn enumeration_count(steps in 1usize..4) {
        let m = build_binomial(&BinomialSpec {
            steps, horizon_years: 1.0, drift: 0.0, vol: 1.0, traded: false,
        }).unwrap();
        let tree = &m.tree;
        let rules: Vec<_> = enumerate_stopping_rules(tree).unwrap().collect();
        prop_assert_eq!(rules.len(), 1usize << tree.n_non_terminal());
        let mut seen = std::collections::HashSet::new();
        for r in &rules {
            prop_assert!(tree.terminal_range().all(|v| r.stop[v]));
            prop_assert!(seen.insert(r.stop.clone()));
        }
    }
}
