//! Measure changes: endowment tilting, entropy-minimizing martingale
//! measures, martingale-measure sampling and indirect utility.

use rand::Rng;

use crate::dag::DagCore;
use crate::dp;
use crate::error::{Result, SolverError};
use crate::onestep::{one_step_ce, zero_in_hull_interior};
use crate::tree::{EventTree, TerminalClaim};

/// Exponential-utility agent: constant absolute risk aversion and a bounded
/// terminal endowment.
#[derive(Debug, Clone)]
pub struct Agent {
    pub risk_aversion: f64,
    pub endowment: TerminalClaim,
}

impl Agent {
    pub fn new(risk_aversion: f64, endowment: TerminalClaim) -> Result<Self> {
        if !(risk_aversion > 0.0) || !risk_aversion.is_finite() {
            return Err(SolverError::Mismatch(format!(
                "risk aversion must be positive, got {risk_aversion}"
            )));
        }
        Ok(Agent { risk_aversion, endowment })
    }

    pub fn without_endowment(tree: &EventTree, risk_aversion: f64) -> Result<Self> {
        Self::new(risk_aversion, TerminalClaim::zero(tree))
    }
}

/// Endowment-tilted transition weights: the measure with density
/// proportional to `exp(-alpha C)`, stored as per-edge weights together with
/// the log-normalizers `log E_t[exp(-alpha C)]`.
#[derive(Debug, Clone)]
pub struct TiltedWeights {
    pub weights: Vec<f64>,
    pub log_norm: Vec<f64>,
}

/// Computes the tilted transition weights on any sliced DAG. `terminal` is
/// the endowment per terminal-slice position. Everything runs in log space,
/// so bounded endowments cannot overflow.
pub fn tilt_weights(core: &DagCore, terminal: &[f64], alpha: f64) -> Result<TiltedWeights> {
    let ts = core.terminal_slice();
    if terminal.len() != ts.len() {
        return Err(SolverError::Mismatch(format!(
            "endowment has {} values for {} terminal nodes",
            terminal.len(),
            ts.len()
        )));
    }
    let mut log_norm = vec![0.0; core.n_nodes()];
    for (i, v) in ts.enumerate() {
        log_norm[v] = -alpha * terminal[i];
    }
    let mut weights = vec![0.0; core.n_edges()];
    let mut terms = Vec::with_capacity(8);
    for k in (0..core.steps()).rev() {
        for v in core.slice(k) {
            let r = core.edge_range(v);
            terms.clear();
            for e in r.clone() {
                terms.push(core.edge_prob[e].ln() + log_norm[core.edge_child[e] as usize]);
            }
            let lse = crate::onestep::logsumexp(&terms);
            if !lse.is_finite() {
                return Err(SolverError::Numeric("tilting normalizer overflowed".into()));
            }
            log_norm[v] = lse;
            let mut total = 0.0;
            for (t, e) in terms.iter().zip(r.clone()) {
                weights[e] = (t - lse).exp();
                total += weights[e];
            }
            for e in r.clone() {
                weights[e] /= total;
            }
        }
    }
    Ok(TiltedWeights { weights, log_norm })
}

/// Tree-level tilting by an agent's endowment.
pub fn tilt_measure(tree: &EventTree, endowment: &TerminalClaim, alpha: f64) -> Result<TiltedWeights> {
    endowment.check_on(tree)?;
    tilt_weights(tree.core(), &endowment.values, alpha)
}

/// An equivalent martingale measure on a market DAG, stored as per-edge
/// transition weights. Entropy and density are relative to the base weights
/// the measure was built against.
#[derive(Debug, Clone)]
pub struct MartingaleMeasure {
    pub edge_prob: Vec<f64>,
    /// Relative entropy (nats) with respect to the base weights.
    pub relative_entropy: f64,
    /// Path density d(this)/d(base) per terminal-slice position.
    pub density_to_base: Vec<f64>,
}

/// Relative entropy of edge weights `q` against `base`, accumulated along
/// the slices under `q`'s own path mass.
pub fn relative_entropy(core: &DagCore, base: &[f64], q: &[f64]) -> f64 {
    let mass = core.node_mass(q);
    let mut h = 0.0;
    for k in 0..core.steps() {
        for v in core.slice(k) {
            if mass[v] == 0.0 {
                continue;
            }
            let mut local = 0.0;
            for e in core.edge_range(v) {
                local += q[e] * (q[e] / base[e]).ln();
            }
            h += mass[v] * local;
        }
    }
    h
}

/// Assembles a `MartingaleMeasure` from edge weights, checking the one-step
/// martingale condition.
pub fn measure_from_edges(core: &DagCore, base: &[f64], q: Vec<f64>) -> Result<MartingaleMeasure> {
    let d = core.asset_dim();
    for k in 0..core.steps() {
        for v in core.slice(k) {
            let r = core.edge_range(v);
            let mut sum = 0.0;
            let mut resid = vec![0.0; d];
            let mut scale: f64 = 0.0;
            for e in r.clone() {
                sum += q[e];
                for a in 0..d {
                    resid[a] += q[e] * core.edge_incr[e * d + a];
                    scale = scale.max(core.edge_incr[e * d + a].abs());
                }
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(SolverError::Mismatch(format!(
                    "measure weights at node {v} sum to {sum}"
                )));
            }
            if resid.iter().any(|x| x.abs() > 1e-10 * scale.max(1.0)) {
                return Err(SolverError::Mismatch(format!(
                    "weights at node {v} violate the martingale condition: residual {resid:?}"
                )));
            }
        }
    }
    // Path density per terminal node, accumulated in log space.
    let mut logz = vec![0.0; core.n_nodes()];
    for k in 0..core.steps() {
        for v in core.slice(k) {
            for e in core.edge_range(v) {
                logz[core.edge_child[e] as usize] = logz[v] + (q[e] / base[e]).ln();
            }
        }
    }
    let density_to_base = core.terminal_slice().map(|v| logz[v].exp()).collect();
    let relative_entropy = relative_entropy(core, base, &q);
    Ok(MartingaleMeasure { edge_prob: q, relative_entropy, density_to_base })
}

/// Entropy-minimizing martingale measure relative to the given base weights
/// (physical or tilted).
pub fn emmm(core: &DagCore, base: &[f64]) -> Result<MartingaleMeasure> {
    let (q, j) = dp::emmm_weights(core, base)?;
    let mut m = measure_from_edges(core, base, q)?;
    // The dynamic program's root cost is the entropy; prefer it (it is the
    // quantity the dual formulas use) but make sure both routes agree.
    debug_assert!((m.relative_entropy - j[0]).abs() <= 1e-9 * (1.0 + j[0].abs()));
    m.relative_entropy = j[0];
    Ok(m)
}

/// Tree-level EMMM under the physical measure.
pub fn emmm_tree(tree: &EventTree) -> Result<MartingaleMeasure> {
    emmm(tree.core(), &tree.core().edge_prob)
}

/// Random equivalent martingale measure: perturbs the base weights by
/// bounded exponential tilts and re-projects each node onto the martingale
/// family (the entropy projection).
pub fn sample_martingale_measure<R: Rng>(
    core: &DagCore,
    base: &[f64],
    spread: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = core.asset_dim();
    let mut q = vec![0.0; core.n_edges()];
    let mut perturbed = Vec::with_capacity(8);
    let mut zeros = Vec::with_capacity(8);
    for k in 0..core.steps() {
        for v in core.slice(k) {
            let r = core.edge_range(v);
            perturbed.clear();
            zeros.clear();
            let mut total = 0.0;
            for e in r.clone() {
                let w = base[e] * (rng.gen_range(-spread..=spread) as f64).exp();
                perturbed.push(w);
                zeros.push(0.0);
                total += w;
            }
            for w in perturbed.iter_mut() {
                *w /= total;
            }
            let sol = one_step_ce(
                &perturbed,
                &core.edge_incr[r.start * d..r.end * d],
                d,
                &zeros,
                1.0,
            )?;
            q[r].copy_from_slice(&sol.dual_weights);
        }
    }
    Ok(q)
}

/// Indirect utility: the supremum of expected exponential utility of
/// terminal wealth `C + claim + trading gains`, always strictly negative.
pub fn utility_indirect(tree: &EventTree, agent: &Agent, claim: &TerminalClaim) -> Result<f64> {
    claim.check_on(tree)?;
    agent.endowment.check_on(tree)?;
    let alpha = agent.risk_aversion;
    let terminal: Vec<f64> = claim
        .values
        .iter()
        .zip(&agent.endowment.values)
        .map(|(h, c)| h + c)
        .collect();
    let core = tree.core();
    let ce = dp::european_values(core, &core.edge_prob, alpha, &terminal)?;
    Ok(-(-alpha * ce[0]).exp())
}

/// True iff the one-step market at `node` is arbitrage-free (zero lies in
/// the relative interior of the child increment hull; `d = 0` counts).
pub fn check_one_step_arbitrage(tree: &EventTree, node: usize) -> bool {
    if tree.is_terminal(node) {
        return true;
    }
    zero_in_hull_interior(tree.core().increments(node), tree.asset_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_binomial, build_incomplete_trinomial, BinomialSpec, CorrelationPattern};
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

    #[test]
    fn tilt_with_constant_endowment_is_identity() {
        let m = binom(3, false);
        let tree = &m.tree;
        for c in [0.0, 2.5] {
            let t = tilt_measure(tree, &TerminalClaim::constant(tree, c), 1.3).unwrap();
            for e in 0..tree.core().n_edges() {
                assert!((t.weights[e] - tree.core().edge_prob[e]).abs() < 1e-14);
            }
            assert!((t.log_norm[0] - (-1.3 * c)).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_one_step_formula() {
        // p = [1/2, 1/2], C = [0, c]: tilted = [1, e^{-alpha c}]/(1 + e^{-alpha c})
        let m = binom(1, false);
        let tree = &m.tree;
        let (alpha, c) = (2.0, 0.8);
        let t = tilt_measure(tree, &TerminalClaim { values: vec![0.0, c] }, alpha).unwrap();
        let z = 1.0 + (-alpha * c as f64).exp();
        assert!((t.weights[0] - 1.0 / z).abs() < 1e-14);
        assert!((t.weights[1] - (-alpha * c as f64).exp() / z).abs() < 1e-14);
    }

    #[test]
    fn symmetric_trinomial_emmm_is_physical() {
        let m = build_incomplete_trinomial(2, 1.0, 1.0, 0.5, CorrelationPattern::Positive).unwrap();
        let q = emmm_tree(&m.tree).unwrap();
        for e in 0..m.tree.core().n_edges() {
            assert!((q.edge_prob[e] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(q.relative_entropy.abs() < 1e-12);
        for z in &q.density_to_base {
            assert!((z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn emmm_entropy_matches_density_sum_and_beats_samples() {
        let m = build_incomplete_trinomial(3, 1.0, 1.0, 0.5, CorrelationPattern::Negative).unwrap();
        let core = m.tree.core();
        // tilt by a nonconstant endowment to get a nontrivial base
        let endow = TerminalClaim {
            values: m.tree.terminal_range().map(|v| 0.5 * m.untraded.values[v]).collect(),
        };
        let tilted = tilt_measure(&m.tree, &endow, 1.5).unwrap();
        let q = emmm(core, &tilted.weights).unwrap();
        assert!(q.relative_entropy >= -1e-12);

        // entropy equals sum over terminals of Q-mass times log density
        let mass = core.node_mass(&q.edge_prob);
        let direct: f64 = core
            .terminal_slice()
            .zip(&q.density_to_base)
            .map(|(v, z)| mass[v] * z.ln())
            .sum();
        assert!((direct - q.relative_entropy).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let sample = sample_martingale_measure(core, &tilted.weights, 1.0, &mut rng).unwrap();
            let h = relative_entropy(core, &tilted.weights, &sample);
            assert!(h + 1e-12 >= q.relative_entropy);
        }
    }

    #[test]
    fn tilting_by_nothing_commutes_with_the_entropy_minimizer() {
        let m = build_incomplete_trinomial(2, 1.0, 1.2, 0.4, CorrelationPattern::Uncorrelated)
            .unwrap();
        let core = m.tree.core();
        let direct = emmm(core, &core.edge_prob).unwrap();
        let tilted = tilt_measure(&m.tree, &TerminalClaim::zero(&m.tree), 3.0).unwrap();
        let via_tilt = emmm(core, &tilted.weights).unwrap();
        for e in 0..core.n_edges() {
            assert!((direct.edge_prob[e] - via_tilt.edge_prob[e]).abs() < 1e-13);
        }
        assert!((direct.relative_entropy - via_tilt.relative_entropy).abs() < 1e-13);
    }

    #[test]
    fn indirect_utility_edges() {
        let m = binom(2, false);
        let tree = &m.tree;
        let agent = Agent::without_endowment(tree, 1.4).unwrap();
        let u = utility_indirect(tree, &agent, &TerminalClaim::zero(tree)).unwrap();
        assert!((u + 1.0).abs() < 1e-14);
        let u = utility_indirect(tree, &agent, &TerminalClaim::constant(tree, 0.7)).unwrap();
        assert!((u + (-1.4f64 * 0.7).exp()).abs() < 1e-14);
    }

    #[test]
    fn indirect_utility_below_complete_market_bound_for_nonreplicable_claim() {
        let m = build_incomplete_trinomial(1, 1.0, 1.0, 0.8, CorrelationPattern::Positive).unwrap();
        let tree = &m.tree;
        let alpha = 2.0;
        let agent = Agent::without_endowment(tree, alpha).unwrap();
        let claim = TerminalClaim {
            values: tree.terminal_range().map(|v| m.untraded.values[v]).collect(),
        };
        let u = utility_indirect(tree, &agent, &claim).unwrap();
        let q = emmm_tree(tree).unwrap();
        let eq = tree.core().terminal_expectation(&q.edge_prob, &claim.values);
        assert!(u < -(-alpha * eq).exp() - 1e-9, "u = {u}, bound = {}", -(-alpha * eq as f64).exp());
    }

    #[test]
    fn arbitrage_check_matches_increment_geometry() {
        let m = binom(2, true);
        for v in 0..m.tree.n_nodes() {
            assert!(check_one_step_arbitrage(&m.tree, v));
        }
        let bad = crate::tree::EventTree::from_parts_unchecked(
            &[0, 1, 1],
            &[None, Some(0), Some(0)],
            &[1.0, 0.5, 0.5],
            &[vec![], vec![1.0], vec![2.0]],
            1,
            1.0,
        )
        .unwrap();
        assert!(!check_one_step_arbitrage(&bad, 0));
    }
}
