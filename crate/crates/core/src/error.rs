use thiserror::Error;

/// Errors surfaced by model construction, solvers and verifiers.
#[derive(Error, Debug)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("one-step arbitrage {}: zero is not in the relative interior of the child increment hull", fmt_node(*node))]
    Arbitrage { node: Option<usize> },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("domination violated at node {node}: envelope falls below payoff by {gap:.3e}")]
    DominationViolated { node: usize, gap: f64 },

    #[error("enumeration needs 2^{needed} rules but the cap allows 2^{cap}")]
    EnumerationCap { needed: usize, cap: usize },

    #[error("best-response iteration did not converge within {0} rounds")]
    NoConvergence(usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;

fn fmt_node(node: Option<usize>) -> String {
    match node {
        Some(n) => format!("at node {n}"),
        None => "in one-step inputs".to_string(),
    }
}
