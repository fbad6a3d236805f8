//! The `gccsolver-model-v1` JSON model format: explicit event trees with
//! named adapted processes and terminal claims.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::tree::{AdaptedProcess, EventTree, TerminalClaim};

pub const SCHEMA: &str = "gccsolver-model-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u64,
    pub time: usize,
    pub parent: Option<u64>,
    /// Transition probability of the edge from `parent` into this node
    /// (ignored for the root).
    #[serde(default = "one")]
    pub prob: f64,
    /// Traded-asset increments along that edge.
    #[serde(default, rename = "dS")]
    pub d_s: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedValues {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub horizon_years: f64,
    #[serde(default)]
    pub asset_dim: usize,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub processes: Vec<NamedValues>,
    #[serde(default)]
    pub claims: Vec<NamedValues>,
}

/// A parsed and validated model: the tree plus named processes (one value
/// per node, in the file's node order) and terminal claims.
#[derive(Debug)]
pub struct LoadedModel {
    pub tree: EventTree,
    pub processes: BTreeMap<String, AdaptedProcess>,
    pub claims: BTreeMap<String, TerminalClaim>,
}

pub fn parse_model(json: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(json)
        .map_err(|e| SolverError::InvalidModel(format!("malformed JSON: {e}")))?;
    if file.schema != SCHEMA {
        return Err(SolverError::InvalidModel(format!(
            "unsupported schema {:?}; expected {SCHEMA:?}",
            file.schema
        )));
    }
    let n = file.nodes.len();
    if n == 0 {
        return Err(SolverError::InvalidModel("no nodes".into()));
    }
    // Order nodes by (time, file position) and remap ids.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (file.nodes[i].time, i));
    let mut new_index: BTreeMap<u64, usize> = BTreeMap::new();
    for (pos, &i) in order.iter().enumerate() {
        if new_index.insert(file.nodes[i].id, pos).is_some() {
            return Err(SolverError::InvalidModel(format!(
                "duplicate node id {}",
                file.nodes[i].id
            )));
        }
    }
    let mut times = vec![0usize; n];
    let mut parents: Vec<Option<usize>> = vec![None; n];
    let mut probs = vec![1.0; n];
    let mut incs: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (pos, &i) in order.iter().enumerate() {
        let spec = &file.nodes[i];
        times[pos] = spec.time;
        probs[pos] = if spec.parent.is_some() { spec.prob } else { 1.0 };
        incs[pos] = if spec.parent.is_some() {
            spec.d_s.clone()
        } else {
            Vec::new()
        };
        if incs[pos].len() < file.asset_dim {
            incs[pos].resize(file.asset_dim, 0.0);
        }
        parents[pos] = match spec.parent {
            None => None,
            Some(p) => Some(*new_index.get(&p).ok_or_else(|| {
                SolverError::InvalidModel(format!("node {} references unknown parent {p}", spec.id))
            })?),
        };
    }
    let tree = EventTree::from_parts(
        &times,
        &parents,
        &probs,
        &incs,
        file.asset_dim,
        file.horizon_years,
    )?;

    let mut processes = BTreeMap::new();
    for p in &file.processes {
        if p.values.len() != n {
            return Err(SolverError::InvalidModel(format!(
                "process {:?} has {} values for {n} nodes",
                p.name,
                p.values.len()
            )));
        }
        let mut values = vec![0.0; n];
        for (pos, &i) in order.iter().enumerate() {
            values[pos] = p.values[i];
        }
        let proc = AdaptedProcess { values };
        proc.check_on(&tree)?;
        processes.insert(p.name.clone(), proc);
    }
    let mut claims = BTreeMap::new();
    for c in &file.claims {
        let claim = TerminalClaim { values: c.values.clone() };
        claim.check_on(&tree)?;
        claims.insert(c.name.clone(), claim);
    }
    Ok(LoadedModel { tree, processes, claims })
}

pub fn load_model(path: &std::path::Path) -> Result<LoadedModel> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| SolverError::InvalidModel(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&json)
}

/// Serializes a tree (with optional named data) back into the file format.
pub fn to_model_file(
    tree: &EventTree,
    processes: &[(&str, &AdaptedProcess)],
    claims: &[(&str, &TerminalClaim)],
) -> ModelFile {
    let core = tree.core();
    let d = tree.asset_dim();
    let mut nodes = Vec::with_capacity(tree.n_nodes());
    let mut in_prob = vec![1.0; tree.n_nodes()];
    let mut in_inc: Vec<Vec<f64>> = vec![Vec::new(); tree.n_nodes()];
    for v in 0..tree.n_nodes() {
        for e in core.edge_range(v) {
            let c = core.edge_child[e] as usize;
            in_prob[c] = core.edge_prob[e];
            in_inc[c] = core.edge_incr[e * d..(e + 1) * d].to_vec();
        }
    }
    for v in 0..tree.n_nodes() {
        nodes.push(NodeSpec {
            id: v as u64,
            time: tree.time_of(v),
            parent: tree.parent(v).map(|p| p as u64),
            prob: in_prob[v],
            d_s: in_inc[v].clone(),
        });
    }
    ModelFile {
        schema: SCHEMA.to_string(),
        horizon_years: tree.horizon_years(),
        asset_dim: d,
        nodes,
        processes: processes
            .iter()
            .map(|(n, p)| NamedValues { name: n.to_string(), values: p.values.clone() })
            .collect(),
        claims: claims
            .iter()
            .map(|(n, c)| NamedValues { name: n.to_string(), values: c.values.clone() })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_incomplete_trinomial, CorrelationPattern};

    #[test]
    fn round_trip_preserves_tree_and_data() {
        let m = build_incomplete_trinomial(2, 1.0, 1.0, 0.5, CorrelationPattern::Positive).unwrap();
        let claim = TerminalClaim {
            values: m.tree.terminal_range().map(|v| m.untraded.values[v]).collect(),
        };
        let file = to_model_file(&m.tree, &[("U", &m.untraded)], &[("H", &claim)]);
        let json = serde_json::to_string_pretty(&file).unwrap();
        let loaded = parse_model(&json).unwrap();
        assert_eq!(loaded.tree.n_nodes(), m.tree.n_nodes());
        assert_eq!(loaded.tree.asset_dim(), 1);
        assert_eq!(loaded.processes["U"].values, m.untraded.values);
        assert_eq!(loaded.claims["H"].values, claim.values);
        for v in 0..m.tree.n_nodes() {
            assert_eq!(loaded.tree.parent(v), m.tree.parent(v));
        }
    }

    #[test]
    fn bad_schema_and_bad_probs_are_rejected() {
        let err = parse_model(r#"{"schema":"other","horizon_years":1,"nodes":[]}"#).unwrap_err();
        assert!(matches!(err, SolverError::InvalidModel(_)));

        let json = r#"{
            "schema": "gccsolver-model-v1",
            "horizon_years": 1.0,
            "asset_dim": 0,
            "nodes": [
                {"id": 0, "time": 0, "parent": null},
                {"id": 1, "time": 1, "parent": 0, "prob": 0.6},
                {"id": 2, "time": 1, "parent": 0, "prob": 0.5}
            ]
        }"#;
        let err = parse_model(json).unwrap_err();
        assert!(matches!(err, SolverError::InvalidModel(_)));
    }

    #[test]
    fn shuffled_ids_are_remapped() {
        let json = r#"{
            "schema": "gccsolver-model-v1",
            "horizon_years": 2.0,
            "asset_dim": 0,
            "nodes": [
                {"id": 7, "time": 1, "parent": 40, "prob": 0.25},
                {"id": 40, "time": 0, "parent": null},
                {"id": 9, "time": 1, "parent": 40, "prob": 0.75}
            ],
            "processes": [{"name": "Z", "values": [1.0, 0.0, 2.0]}]
        }"#;
        let loaded = parse_model(json).unwrap();
        assert_eq!(loaded.tree.n_nodes(), 3);
        // file position 1 (id 40) is the root; Z follows the node order
        assert_eq!(loaded.processes["Z"].values, vec![0.0, 1.0, 2.0]);
    }
}
