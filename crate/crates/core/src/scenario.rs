//! Builtin scenarios: small self-contained market models with payoffs and
//! agents wired up, used by the command-line front end and the test suites.
//!
//! Brownian drivers are discretized as symmetric binomial walks; drift terms
//! enter the payoff expressions, not the branch probabilities, which keeps
//! the exercise/recall ordering exact.

use crate::dynkin::GccSpec;
use crate::error::{Result, SolverError};
use crate::lattice::{Lattice, LatticeAgent, LatticeGcc};
use crate::measure::Agent;
use crate::tree::{
    build_binomial, build_incomplete_trinomial, AdaptedProcess, BinomialSpec, CorrelationPattern,
    EventTree, TerminalClaim,
};

/// Affine expression in the walk and time: `w_coef * W + t_coef * t + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec {
    pub w_coef: f64,
    pub t_coef: f64,
    pub constant: f64,
}

impl AffineSpec {
    pub const ZERO: AffineSpec = AffineSpec { w_coef: 0.0, t_coef: 0.0, constant: 0.0 };

    pub fn eval(&self, t: f64, w: f64) -> f64 {
        self.w_coef * w + self.t_coef * t + self.constant
    }

    /// Parses expressions like `"w"`, `"-1.5"`, `"w+0.5t"`, `"2w-0.3t+1"`.
    pub fn parse(spec: &str) -> Result<AffineSpec> {
        let compact: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Ok(AffineSpec::ZERO);
        }
        let mut out = AffineSpec::ZERO;
        let mut term = String::new();
        let mut terms = Vec::new();
        for (i, c) in compact.chars().enumerate() {
            if (c == '+' || c == '-') && i > 0 {
                terms.push(std::mem::take(&mut term));
            }
            term.push(c);
        }
        terms.push(term);
        for t in terms {
            let (body, var) = match t.chars().last() {
                Some('w') | Some('W') => (&t[..t.len() - 1], Some('w')),
                Some('t') | Some('T') => (&t[..t.len() - 1], Some('t')),
                _ => (&t[..], None),
            };
            let body = body.strip_suffix('*').unwrap_or(body);
            let coef = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                s => s.parse::<f64>().map_err(|_| {
                    SolverError::InvalidModel(format!("cannot parse affine term {t:?} in {spec:?}"))
                })?,
            };
            match var {
                Some('w') => out.w_coef += coef,
                Some('t') => out.t_coef += coef,
                _ => out.constant += coef,
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for AffineSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}*W + {}*t + {}", self.w_coef, self.t_coef, self.constant)
    }
}

/// Optional command-line overrides of scenario defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub alpha_a: Option<f64>,
    pub alpha_b: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub endowment_a: Option<String>,
}

/// Which solver backend to run a scenario on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineChoice {
    Auto,
    Tree,
    Lattice,
}

/// A scenario realized on an explicit event tree.
pub struct TreeScenario {
    pub tree: EventTree,
    pub x: AdaptedProcess,
    pub y: AdaptedProcess,
    pub claim: TerminalClaim,
    pub buyer: Agent,
    pub seller: Agent,
}

/// A scenario realized on the recombining lattice.
pub struct LatticeScenario {
    pub lattice: Lattice,
    pub gcc: LatticeGcc,
    pub claim: Vec<f64>,
}

pub enum Built {
    Tree(TreeScenario),
    Lattice(LatticeScenario),
}

pub const SCENARIO_NAMES: [&str; 7] = [
    "note33",
    "const",
    "amput",
    "incomplete3",
    "example41-case1",
    "example41-case2",
    "example43",
];

/// Resolved scenario parameters, kept for reporting.
#[derive(Debug, Clone)]
pub struct ScenarioInfo {
    pub name: String,
    pub steps: usize,
    pub horizon_years: f64,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub mu: f64,
    pub delta: f64,
    pub endowment_a: AffineSpec,
    pub describe: String,
}

fn walk_games_info(name: &str, ov: &Overrides) -> Result<ScenarioInfo> {
    // Defaults satisfy the standing inequalities of the drifted-walk games:
    // alpha_B/2 < mu < alpha_A/2 and 0 < delta < (alpha_A/2 + mu) * T for the
    // endowment cases, 0 < delta < (alpha_A/2) * T for the symmetric game.
    let (steps, alpha_a, alpha_b, mu, delta, endow) = match name {
        "example41-case1" => (50, 2.0, 0.5, 0.5, 0.5, AffineSpec::ZERO),
        "example41-case2" => {
            (50, 2.0, 0.5, 0.5, 0.5, AffineSpec { w_coef: 1.0, t_coef: 0.5, constant: 0.0 })
        }
        "example43" => (3, 2.0, 1.0, 0.0, 0.5, AffineSpec::ZERO),
        _ => unreachable!(),
    };
    let mu = ov.mu.unwrap_or(mu);
    let endowment_a = match &ov.endowment_a {
        Some(s) => AffineSpec::parse(s)?,
        None => {
            if name == "example41-case2" {
                AffineSpec { w_coef: 1.0, t_coef: mu, constant: 0.0 }
            } else {
                endow
            }
        }
    };
    let info = ScenarioInfo {
        name: name.to_string(),
        steps: ov.steps.unwrap_or(steps),
        horizon_years: 1.0,
        alpha_a: ov.alpha_a.unwrap_or(alpha_a),
        alpha_b: ov.alpha_b.unwrap_or(alpha_b),
        mu,
        delta: ov.delta.unwrap_or(delta),
        endowment_a,
        describe: String::new(),
    };
    let mut describe = format!(
        "{}: symmetric walk, X = W + {}*t, Y = X + {}, alpha_A = {}, alpha_B = {}, \
         seller endowment {} at the horizon, T = {}, steps = {}.",
        name, info.mu, info.delta, info.alpha_a, info.alpha_b, info.endowment_a, info.horizon_years,
        info.steps
    );
    describe.push_str(
        " Parameter defaults are chosen to satisfy alpha_B/2 < mu < alpha_A/2 and \
         0 < delta < (alpha_A/2 + mu)*T.",
    );
    Ok(ScenarioInfo { describe, ..info })
}

pub fn scenario_info(name: &str, ov: &Overrides) -> Result<ScenarioInfo> {
    match name {
        "example41-case1" | "example41-case2" | "example43" => walk_games_info(name, ov),
        "note33" => Ok(ScenarioInfo {
            name: name.into(),
            steps: 1,
            horizon_years: 1.0,
            alpha_a: ov.alpha_a.unwrap_or(1.0),
            alpha_b: ov.alpha_b.unwrap_or(1.0),
            mu: 0.0,
            delta: ov.delta.unwrap_or(5.0),
            endowment_a: AffineSpec::ZERO,
            describe: "note33: no traded asset, one step, an event of probability 0.3; the claim \
                       pays delta (default 5) on the event and 0 otherwise. The indifference \
                       value solves exp(-alpha*pi) = exp(-alpha*delta)*0.3 + 0.7 and stays \
                       bounded as delta grows."
                .into(),
        }),
        "const" => Ok(ScenarioInfo {
            name: name.into(),
            steps: ov.steps.unwrap_or(3),
            horizon_years: 1.0,
            alpha_a: ov.alpha_a.unwrap_or(1.0),
            alpha_b: ov.alpha_b.unwrap_or(1.0),
            mu: 0.0,
            delta: ov.delta.unwrap_or(3.0),
            endowment_a: AffineSpec::ZERO,
            describe: "const: symmetric walk with a constant claim and constant payoffs equal to \
                       delta (default 3); every value reproduces the constant."
                .into(),
        }),
        "amput" => Ok(ScenarioInfo {
            name: name.into(),
            steps: ov.steps.unwrap_or(6),
            horizon_years: 1.0,
            alpha_a: ov.alpha_a.unwrap_or(2.0),
            alpha_b: ov.alpha_b.unwrap_or(1.0),
            mu: 0.0,
            delta: ov.delta.unwrap_or(0.05),
            endowment_a: AffineSpec::ZERO,
            describe: "amput: complete market, underlying s = 1 + W with vol 0.4 traded; X is \
                       the put payoff max(1 - s, 0), Y = X + delta. Values are preference-free \
                       and match the classical risk-neutral lattice."
                .into(),
        }),
        "incomplete3" => Ok(ScenarioInfo {
            name: name.into(),
            steps: ov.steps.unwrap_or(3),
            horizon_years: 1.0,
            alpha_a: ov.alpha_a.unwrap_or(2.0),
            alpha_b: ov.alpha_b.unwrap_or(1.0),
            mu: 0.0,
            delta: ov.delta.unwrap_or(0.5),
            endowment_a: AffineSpec::ZERO,
            describe: "incomplete3: trinomial market with one traded asset and an untraded \
                       driver it cannot span; the claim is the terminal driver value, X the \
                       running driver, Y = X + delta."
                .into(),
        }),
        other => Err(SolverError::InvalidModel(format!(
            "unknown scenario {other:?}; available: {}",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

/// Walk-game scenarios qualify for the lattice when their payoffs and
/// endowments are functions of (t, W).
fn lattice_expressible(name: &str) -> bool {
    matches!(name, "example41-case1" | "example41-case2" | "example43" | "const")
}

pub fn build_scenario(name: &str, ov: &Overrides, engine: EngineChoice) -> Result<(ScenarioInfo, Built)> {
    let info = scenario_info(name, ov)?;
    let use_lattice = match engine {
        EngineChoice::Tree => false,
        EngineChoice::Lattice => {
            if !lattice_expressible(name) {
                return Err(SolverError::InvalidModel(format!(
                    "scenario {name:?} is not expressible on the recombining lattice"
                )));
            }
            true
        }
        EngineChoice::Auto => lattice_expressible(name) && info.steps > 16,
    };
    let built = if use_lattice {
        Built::Lattice(build_on_lattice(&info)?)
    } else {
        Built::Tree(build_on_tree(&info)?)
    };
    Ok((info, built))
}

fn build_on_lattice(info: &ScenarioInfo) -> Result<LatticeScenario> {
    let lat = Lattice::binomial(info.steps, info.horizon_years, 1.0, false)?;
    let (x, y, claim) = match info.name.as_str() {
        "const" => {
            let c = info.delta;
            (vec![c; lat.n_nodes()], vec![c; lat.n_nodes()], lat.terminal_claim(|_, _| c))
        }
        _ => {
            let x = lat.node_process(|t, w| w + info.mu * t);
            let y: Vec<f64> = x.iter().map(|v| v + info.delta).collect();
            let claim = lat.terminal_claim(|t, w| w + info.mu * t);
            (x, y, claim)
        }
    };
    let endow_a = lat.terminal_claim(|t, w| info.endowment_a.eval(t, w));
    let n_term = lat.core().terminal_slice().len();
    let gcc = LatticeGcc::new(
        &lat,
        x,
        y,
        LatticeAgent { risk_aversion: info.alpha_b, endowment: vec![0.0; n_term] },
        LatticeAgent { risk_aversion: info.alpha_a, endowment: endow_a },
    )?;
    Ok(LatticeScenario { lattice: lat, gcc, claim })
}

fn build_on_tree(info: &ScenarioInfo) -> Result<TreeScenario> {
    match info.name.as_str() {
        "note33" => {
            let tree = EventTree::from_parts(
                &[0, 1, 1],
                &[None, Some(0), Some(0)],
                &[1.0, 0.3, 0.7],
                &[vec![], vec![], vec![]],
                0,
                1.0,
            )?;
            let claim = TerminalClaim { values: vec![info.delta, 0.0] };
            let x = AdaptedProcess { values: vec![0.0, info.delta, 0.0] };
            let buyer = Agent::without_endowment(&tree, info.alpha_b)?;
            let seller = Agent::without_endowment(&tree, info.alpha_a)?;
            Ok(TreeScenario { tree, x: x.clone(), y: x, claim, buyer, seller })
        }
        "const" => {
            let m = build_binomial(&BinomialSpec {
                steps: info.steps,
                horizon_years: info.horizon_years,
                drift: 0.0,
                vol: 1.0,
                traded: false,
            })?;
            let c = info.delta;
            let x = AdaptedProcess::constant(&m.tree, c);
            let claim = TerminalClaim::constant(&m.tree, c);
            let buyer = Agent::without_endowment(&m.tree, info.alpha_b)?;
            let seller = Agent::without_endowment(&m.tree, info.alpha_a)?;
            Ok(TreeScenario { tree: m.tree, x: x.clone(), y: x, claim, buyer, seller })
        }
        "amput" => {
            let m = build_binomial(&BinomialSpec {
                steps: info.steps,
                horizon_years: info.horizon_years,
                drift: 0.0,
                vol: 0.4,
                traded: true,
            })?;
            let x = AdaptedProcess::from_fn(&m.tree, |v| (-m.walk.values[v]).max(0.0));
            let y = AdaptedProcess::from_fn(&m.tree, |v| x.values[v] + info.delta);
            let claim = TerminalClaim {
                values: m.tree.terminal_range().map(|v| x.values[v]).collect(),
            };
            let buyer = Agent::without_endowment(&m.tree, info.alpha_b)?;
            let seller = Agent::without_endowment(&m.tree, info.alpha_a)?;
            Ok(TreeScenario { tree: m.tree, x, y, claim, buyer, seller })
        }
        "incomplete3" => {
            let m = build_incomplete_trinomial(
                info.steps,
                info.horizon_years,
                1.0,
                0.7,
                CorrelationPattern::Positive,
            )?;
            let x = m.untraded.clone();
            let y = AdaptedProcess::from_fn(&m.tree, |v| x.values[v] + info.delta);
            let claim = TerminalClaim {
                values: m.tree.terminal_range().map(|v| m.untraded.values[v]).collect(),
            };
            let buyer = Agent::without_endowment(&m.tree, info.alpha_b)?;
            let seller = Agent::without_endowment(&m.tree, info.alpha_a)?;
            Ok(TreeScenario { tree: m.tree, x, y, claim, buyer, seller })
        }
        // drifted-walk games
        _ => {
            let m = build_binomial(&BinomialSpec {
                steps: info.steps,
                horizon_years: info.horizon_years,
                drift: info.mu,
                vol: 1.0,
                traded: false,
            })?;
            let x = m.drifted.clone();
            let y = AdaptedProcess::from_fn(&m.tree, |v| x.values[v] + info.delta);
            let claim = TerminalClaim {
                values: m.tree.terminal_range().map(|v| x.values[v]).collect(),
            };
            let endow_a = TerminalClaim {
                values: m
                    .tree
                    .terminal_range()
                    .map(|v| {
                        info.endowment_a
                            .eval(m.tree.time_years(v), m.walk.values[v])
                    })
                    .collect(),
            };
            let buyer = Agent::without_endowment(&m.tree, info.alpha_b)?;
            let seller = Agent::new(info.alpha_a, endow_a)?;
            Ok(TreeScenario { tree: m.tree, x, y, claim, buyer, seller })
        }
    }
}

impl TreeScenario {
    pub fn gcc(&self) -> Result<GccSpec> {
        GccSpec::new(
            &self.tree,
            self.x.clone(),
            self.y.clone(),
            self.buyer.clone(),
            self.seller.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_parser_handles_common_forms() {
        assert_eq!(AffineSpec::parse("w").unwrap(), AffineSpec { w_coef: 1.0, t_coef: 0.0, constant: 0.0 });
        assert_eq!(
            AffineSpec::parse("W+0.5t").unwrap(),
            AffineSpec { w_coef: 1.0, t_coef: 0.5, constant: 0.0 }
        );
        assert_eq!(
            AffineSpec::parse("-2*w + 0.25*t - 1.5").unwrap(),
            AffineSpec { w_coef: -2.0, t_coef: 0.25, constant: -1.5 }
        );
        assert_eq!(AffineSpec::parse("0").unwrap(), AffineSpec::ZERO);
        assert!(AffineSpec::parse("q+1").is_err());
    }

    #[test]
    fn scenario_engine_selection() {
        let ov = Overrides::default();
        // 50-step walk game lands on the lattice automatically
        let (_, built) = build_scenario("example41-case1", &ov, EngineChoice::Auto).unwrap();
        assert!(matches!(built, Built::Lattice(_)));
        // a small override runs on the explicit tree
        let ov_small = Overrides { steps: Some(6), ..Default::default() };
        let (_, built) = build_scenario("example41-case1", &ov_small, EngineChoice::Auto).unwrap();
        assert!(matches!(built, Built::Tree(_)));
        // trinomial cannot be forced onto the lattice
        assert!(build_scenario("incomplete3", &ov, EngineChoice::Lattice).is_err());
        assert!(build_scenario("nonsense", &ov, EngineChoice::Auto).is_err());
    }

    #[test]
    fn note33_scenario_prices_to_the_closed_form() {
        let (_, built) = build_scenario("note33", &Overrides::default(), EngineChoice::Auto).unwrap();
        let Built::Tree(s) = built else { panic!("expected tree") };
        let valuer = crate::indifference::Valuer::new(&s.tree, s.buyer.clone()).unwrap();
        let pi = valuer.value_of_claim(&s.claim).unwrap();
        let expect = -((-5.0f64).exp() * 0.3 + 0.7).ln();
        assert!((pi - expect).abs() < 1e-13);
    }

    #[test]
    fn tree_and_lattice_scenario_values_agree() {
        let ov = Overrides { steps: Some(8), ..Default::default() };
        let (_, tree_built) = build_scenario("example41-case2", &ov, EngineChoice::Tree).unwrap();
        let (_, lat_built) = build_scenario("example41-case2", &ov, EngineChoice::Lattice).unwrap();
        let Built::Tree(ts) = tree_built else { unreachable!() };
        let Built::Lattice(ls) = lat_built else { unreachable!() };
        let tgcc = ts.gcc().unwrap();
        let tr = crate::dynkin::nash_iterate(&ts.tree, &tgcc, crate::dynkin::FirstMover::Buyer, 100)
            .unwrap();
        let lr = crate::lattice::lattice_nash_iterate(
            &ls.lattice,
            &ls.gcc,
            crate::dynkin::FirstMover::Buyer,
            100,
        )
        .unwrap();
        assert!((tr.j_buyer - lr.j_buyer).abs() < 1e-11);
        assert!((tr.j_seller - lr.j_seller).abs() < 1e-11);
    }
}
