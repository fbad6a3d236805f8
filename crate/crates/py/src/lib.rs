//! Python bindings: event trees, indifference valuation, optimal stopping
//! and equilibrium stopping pairs, driven in-process from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gccsolver::dynkin::{
    nash_iterate, verify_nep_exhaustive, verify_nep_snell, FirstMover, GccSpec,
};
use gccsolver::indifference::Valuer;
use gccsolver::measure::Agent;
use gccsolver::model;
use gccsolver::snell::snell_envelope;
use gccsolver::tree::{
    build_binomial, build_incomplete_trinomial, validate_tree, AdaptedProcess, BinomialSpec,
    CorrelationPattern, EventTree, StoppingRule, TerminalClaim,
};
use gccsolver::SolverError;

fn err(e: SolverError) -> PyErr {
    match e {
        SolverError::Internal(_) | SolverError::Numeric(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A finite event tree with optional named driver processes.
#[pyclass]
struct Tree {
    inner: EventTree,
    walk: Option<Vec<f64>>,
    untraded: Option<Vec<f64>>,
}

impl Tree {
    fn claim(&self, values: Vec<f64>) -> PyResult<TerminalClaim> {
        let claim = TerminalClaim { values };
        claim.check_on(&self.inner).map_err(err)?;
        Ok(claim)
    }

    fn process(&self, values: Vec<f64>) -> PyResult<AdaptedProcess> {
        let p = AdaptedProcess { values };
        p.check_on(&self.inner).map_err(err)?;
        Ok(p)
    }

    fn agent(&self, alpha: f64, endowment: Option<Vec<f64>>) -> PyResult<Agent> {
        let endowment = match endowment {
            Some(values) => self.claim(values)?,
            None => TerminalClaim::zero(&self.inner),
        };
        Agent::new(alpha, endowment).map_err(err)
    }

    fn rule_from_stops(&self, stops: Vec<usize>) -> PyResult<StoppingRule> {
        for &s in &stops {
            if s >= self.inner.n_nodes() {
                return Err(PyValueError::new_err(format!("node {s} out of range")));
            }
        }
        Ok(StoppingRule::from_marks(&self.inner, stops))
    }
}

#[pymethods]
impl Tree {
    /// Symmetric binomial walk tree. The walk moves by ±vol·sqrt(dt); with a
    /// nonzero drift the stored walk is the drifted one.
    #[staticmethod]
    #[pyo3(signature = (steps, horizon_years=1.0, drift=0.0, vol=1.0, traded=false))]
    fn binomial(steps: usize, horizon_years: f64, drift: f64, vol: f64, traded: bool) -> PyResult<Self> {
        let m = build_binomial(&BinomialSpec { steps, horizon_years, drift, vol, traded })
            .map_err(err)?;
        let walk = if drift != 0.0 { m.drifted.values } else { m.walk.values };
        Ok(Tree { inner: m.tree, walk: Some(walk), untraded: None })
    }

    /// Incomplete trinomial market: one traded asset with increments
    /// [+h, 0, -h] and an untraded driver it cannot span.
    /// `pattern` is one of "positive", "negative", "uncorrelated".
    #[staticmethod]
    #[pyo3(signature = (steps, horizon_years=1.0, traded_vol=1.0, untraded_vol=0.7, pattern="positive"))]
    fn trinomial(
        steps: usize,
        horizon_years: f64,
        traded_vol: f64,
        untraded_vol: f64,
        pattern: &str,
    ) -> PyResult<Self> {
        let pattern = match pattern {
            "positive" => CorrelationPattern::Positive,
            "negative" => CorrelationPattern::Negative,
            "uncorrelated" => CorrelationPattern::Uncorrelated,
            other => return Err(PyValueError::new_err(format!("unknown pattern {other:?}"))),
        };
        let m = build_incomplete_trinomial(steps, horizon_years, traded_vol, untraded_vol, pattern)
            .map_err(err)?;
        Ok(Tree { inner: m.tree, walk: Some(m.traded.values), untraded: Some(m.untraded.values) })
    }

    /// Parse a gccsolver-model-v1 JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let loaded = model::parse_model(text).map_err(err)?;
        Ok(Tree { inner: loaded.tree, walk: None, untraded: None })
    }

    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    fn n_steps(&self) -> usize {
        self.inner.steps()
    }

    fn n_terminals(&self) -> usize {
        self.inner.n_terminals()
    }

    fn asset_dim(&self) -> usize {
        self.inner.asset_dim()
    }

    /// Time in years of each node.
    fn times(&self) -> Vec<f64> {
        (0..self.inner.n_nodes()).map(|v| self.inner.time_years(v)).collect()
    }

    fn parent(&self, node: usize) -> Option<usize> {
        self.inner.parent(node)
    }

    /// Node ids of the terminal slice.
    fn terminal_nodes(&self) -> Vec<usize> {
        self.inner.terminal_range().collect()
    }

    /// Driver walk per node (the drifted walk when built with a drift).
    fn walk(&self) -> PyResult<Vec<f64>> {
        self.walk
            .clone()
            .ok_or_else(|| PyValueError::new_err("this tree carries no walk driver"))
    }

    /// Untraded driver per node (trinomial trees only).
    fn untraded(&self) -> PyResult<Vec<f64>> {
        self.untraded
            .clone()
            .ok_or_else(|| PyValueError::new_err("this tree carries no untraded driver"))
    }

    /// Validation messages; empty for a well-formed tree.
    fn validate(&self) -> Vec<String> {
        validate_tree(&self.inner)
            .violations
            .iter()
            .map(|v| format!("node {}: {}", v.node, v.message))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Tree(steps={}, nodes={}, terminals={}, assets={})",
            self.inner.steps(),
            self.inner.n_nodes(),
            self.inner.n_terminals(),
            self.inner.asset_dim(),
        )
    }
}

/// Root indifference value of a terminal claim.
#[pyfunction]
#[pyo3(signature = (tree, claim, alpha, endowment=None))]
fn indifference_value(tree: &Tree, claim: Vec<f64>, alpha: f64, endowment: Option<Vec<f64>>) -> PyResult<f64> {
    let claim = tree.claim(claim)?;
    let valuer = Valuer::new(&tree.inner, tree.agent(alpha, endowment)?).map_err(err)?;
    valuer.value_of_claim(&claim).map_err(err)
}

/// Full indifference value process (one value per node).
#[pyfunction]
#[pyo3(signature = (tree, claim, alpha, endowment=None))]
fn indifference_process(
    tree: &Tree,
    claim: Vec<f64>,
    alpha: f64,
    endowment: Option<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let claim = tree.claim(claim)?;
    let valuer = Valuer::new(&tree.inner, tree.agent(alpha, endowment)?).map_err(err)?;
    Ok(valuer.value_process(&claim).map_err(err)?.values)
}

/// Optimal stopping of a payoff process: envelope, stop nodes and root value.
#[pyfunction]
#[pyo3(signature = (tree, payoff, alpha, endowment=None))]
fn snell(
    py: Python<'_>,
    tree: &Tree,
    payoff: Vec<f64>,
    alpha: f64,
    endowment: Option<Vec<f64>>,
) -> PyResult<PyObject> {
    let payoff = tree.process(payoff)?;
    let valuer = Valuer::new(&tree.inner, tree.agent(alpha, endowment)?).map_err(err)?;
    let result = snell_envelope(&valuer, &payoff).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("root", result.root_value)?;
    out.set_item("envelope", &result.envelope.values)?;
    out.set_item("stops", result.optimal_rule.canonical_stops(&tree.inner))?;
    Ok(out.into())
}

fn gcc_from_py(
    tree: &Tree,
    x: Vec<f64>,
    y: Vec<f64>,
    alpha_buyer: f64,
    alpha_seller: f64,
    endowment_buyer: Option<Vec<f64>>,
    endowment_seller: Option<Vec<f64>>,
) -> PyResult<GccSpec> {
    GccSpec::new(
        &tree.inner,
        tree.process(x)?,
        tree.process(y)?,
        tree.agent(alpha_buyer, endowment_buyer)?,
        tree.agent(alpha_seller, endowment_seller)?,
    )
    .map_err(err)
}

/// Equilibrium stopping pair by monotone best-response iteration.
#[pyfunction]
#[pyo3(signature = (tree, x, y, alpha_buyer, alpha_seller,
                    endowment_buyer=None, endowment_seller=None,
                    first_mover="buyer", max_iter=1000))]
#[allow(clippy::too_many_arguments)]
fn nash(
    py: Python<'_>,
    tree: &Tree,
    x: Vec<f64>,
    y: Vec<f64>,
    alpha_buyer: f64,
    alpha_seller: f64,
    endowment_buyer: Option<Vec<f64>>,
    endowment_seller: Option<Vec<f64>>,
    first_mover: &str,
    max_iter: usize,
) -> PyResult<PyObject> {
    let gcc = gcc_from_py(tree, x, y, alpha_buyer, alpha_seller, endowment_buyer, endowment_seller)?;
    let mover = match first_mover {
        "buyer" => FirstMover::Buyer,
        "seller" => FirstMover::Seller,
        other => {
            return Err(PyValueError::new_err(format!(
                "first_mover must be buyer or seller, got {other:?}"
            )))
        }
    };
    let run = nash_iterate(&tree.inner, &gcc, mover, max_iter).map_err(err)?;
    let report =
        verify_nep_snell(&tree.inner, &gcc, &run.buyer_rule, &run.seller_rule).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("converged", run.converged)?;
    out.set_item("rounds", run.trace.len())?;
    out.set_item("buyer_stops", run.buyer_rule.canonical_stops(&tree.inner))?;
    out.set_item("seller_stops", run.seller_rule.canonical_stops(&tree.inner))?;
    out.set_item("j_buyer", run.j_buyer)?;
    out.set_item("j_seller", run.j_seller)?;
    out.set_item("buyer_gap", report.buyer_gap)?;
    out.set_item("seller_gap", report.seller_gap)?;
    out.set_item("verified", report.passed())?;
    Ok(out.into())
}

/// Check a stopping pair for the equilibrium property (envelope certificate,
/// plus exhaustive enumeration on small trees).
#[pyfunction]
#[pyo3(signature = (tree, x, y, buyer_stops, seller_stops, alpha_buyer, alpha_seller,
                    endowment_buyer=None, endowment_seller=None))]
#[allow(clippy::too_many_arguments)]
fn verify_equilibrium(
    py: Python<'_>,
    tree: &Tree,
    x: Vec<f64>,
    y: Vec<f64>,
    buyer_stops: Vec<usize>,
    seller_stops: Vec<usize>,
    alpha_buyer: f64,
    alpha_seller: f64,
    endowment_buyer: Option<Vec<f64>>,
    endowment_seller: Option<Vec<f64>>,
) -> PyResult<PyObject> {
    let gcc = gcc_from_py(tree, x, y, alpha_buyer, alpha_seller, endowment_buyer, endowment_seller)?;
    let tau = tree.rule_from_stops(buyer_stops)?;
    let sigma = tree.rule_from_stops(seller_stops)?;
    let snell_rep = verify_nep_snell(&tree.inner, &gcc, &tau, &sigma).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("j_buyer", snell_rep.j_buyer)?;
    out.set_item("j_seller", snell_rep.j_seller)?;
    out.set_item("buyer_gap", snell_rep.buyer_gap)?;
    out.set_item("seller_gap", snell_rep.seller_gap)?;
    let mut verified = snell_rep.passed();
    if tree.inner.n_non_terminal() <= 16 {
        let ex = verify_nep_exhaustive(&tree.inner, &gcc, &tau, &sigma, 16).map_err(err)?;
        out.set_item("exhaustive_buyer_gap", ex.buyer_gap)?;
        out.set_item("exhaustive_seller_gap", ex.seller_gap)?;
        verified = ex.passed();
    }
    out.set_item("verified", verified)?;
    Ok(out.into())
}

#[pymodule]
fn gccsolver_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Tree>()?;
    m.add_function(wrap_pyfunction!(indifference_value, m)?)?;
    m.add_function(wrap_pyfunction!(indifference_process, m)?)?;
    m.add_function(wrap_pyfunction!(snell, m)?)?;
    m.add_function(wrap_pyfunction!(nash, m)?)?;
    m.add_function(wrap_pyfunction!(verify_equilibrium, m)?)?;
    Ok(())
}
