//! Shared storage for time-sliced market graphs.
//!
//! Both the full event tree and the recombining lattice are stored as a
//! directed acyclic graph whose nodes are grouped into contiguous time
//! slices and whose outgoing edges sit in one CSR block per node. Every
//! backward-induction kernel in this crate works on this structure; only
//! path-dependent operations (stopping-rule lifts, exhaustive enumeration)
//! need the tree-specific parent links kept in `tree`.

use std::ops::Range;

/// Time-sliced DAG with per-edge transition probabilities and traded-asset
/// increments (stride `asset_dim` floats per edge).
#[derive(Debug, Clone)]
pub struct DagCore {
    pub(crate) slices: Vec<Range<usize>>,
    pub(crate) edge_start: Vec<u32>,
    pub(crate) edge_child: Vec<u32>,
    pub(crate) edge_prob: Vec<f64>,
    pub(crate) edge_incr: Vec<f64>,
    pub(crate) asset_dim: usize,
}

impl DagCore {
    pub fn n_nodes(&self) -> usize {
        self.edge_start.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.edge_child.len()
    }

    /// Number of time steps (slices are 0..=steps).
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn asset_dim(&self) -> usize {
        self.asset_dim
    }

    pub fn slice(&self, k: usize) -> Range<usize> {
        self.slices[k].clone()
    }

    /// Terminal slice (time index = steps).
    pub fn terminal_slice(&self) -> Range<usize> {
        self.slices[self.slices.len() - 1].clone()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.terminal_slice().contains(&node)
    }

    /// Time index of a node (slices are contiguous and ordered).
    pub fn time_of(&self, node: usize) -> usize {
        // Slices are sorted by start; binary search keeps this O(log steps).
        match self
            .slices
            .binary_search_by(|r| {
                if node < r.start {
                    std::cmp::Ordering::Greater
                } else if node >= r.end {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            }) {
            Ok(k) => k,
            Err(_) => unreachable!("node id out of range"),
        }
    }

    /// CSR range of the outgoing edges of `node`.
    pub fn edge_range(&self, node: usize) -> Range<usize> {
        self.edge_start[node] as usize..self.edge_start[node + 1] as usize
    }

    pub fn n_children(&self, node: usize) -> usize {
        (self.edge_start[node + 1] - self.edge_start[node]) as usize
    }

    pub fn children(&self, node: usize) -> &[u32] {
        &self.edge_child[self.edge_range(node)]
    }

    pub fn probs(&self, node: usize) -> &[f64] {
        &self.edge_prob[self.edge_range(node)]
    }

    /// All edge transition probabilities, in CSR order.
    pub fn edge_probabilities(&self) -> &[f64] {
        &self.edge_prob
    }

    /// Increments of the outgoing edges, flattened with stride `asset_dim`.
    pub fn increments(&self, node: usize) -> &[f64] {
        let r = self.edge_range(node);
        &self.edge_incr[r.start * self.asset_dim..r.end * self.asset_dim]
    }

    /// Probability mass reaching each node under the given edge weights.
    pub fn node_mass(&self, weights: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.n_nodes()];
        mass[0] = 1.0;
        for k in 0..self.steps() {
            for v in self.slice(k) {
                let mv = mass[v];
                if mv == 0.0 {
                    continue;
                }
                for e in self.edge_range(v) {
                    mass[self.edge_child[e] as usize] += mv * weights[e];
                }
            }
        }
        mass
    }

    /// Expectation of terminal values under the given edge weights.
    pub fn terminal_expectation(&self, weights: &[f64], terminal: &[f64]) -> f64 {
        let mass = self.node_mass(weights);
        let ts = self.terminal_slice();
        terminal
            .iter()
            .zip(mass[ts].iter())
            .map(|(x, m)| x * m)
            .sum()
    }

    /// True if some root-to-terminal path hits a node of `first` (that is not
    /// also in `second`) strictly before hitting any node of `second`.
    ///
    /// Used for pathwise stopping-time comparisons: `tau_a <= tau_b` on every
    /// path iff `exists_path_hit_strictly_before(b, a)` is false.
    pub fn exists_path_hit_strictly_before(&self, first: &[bool], second: &[bool]) -> bool {
        // Reachability of "no hit of either set yet" prefixes.
        let mut open = vec![false; self.n_nodes()];
        open[0] = true;
        for k in 0..=self.steps() {
            for v in self.slice(k) {
                if !open[v] {
                    continue;
                }
                if second[v] {
                    continue; // second stops here (or ties); not a strict precedence
                }
                if first[v] {
                    return true;
                }
                for e in self.edge_range(v) {
                    open[self.edge_child[e] as usize] = true;
                }
            }
        }
        false
    }

    /// True if some path, after first hitting `absorb` at a node outside
    /// `exempt`, passes through a node of `bad` strictly before hitting
    /// `until`.
    ///
    /// This is the representability guard for the post-tie segment of a
    /// modified best-response rule.
    pub fn exists_hit_between(
        &self,
        absorb: &[bool],
        exempt: &[bool],
        bad: &[bool],
        until: &[bool],
    ) -> bool {
        // phase 0: nothing hit yet; phase 1: absorbed (outside exempt), not yet past `until`.
        let n = self.n_nodes();
        let mut p0 = vec![false; n];
        let mut p1 = vec![false; n];
        p0[0] = true;
        for k in 0..=self.steps() {
            for v in self.slice(k) {
                if p1[v] {
                    if bad[v] && !until[v] {
                        return true;
                    }
                    if !until[v] {
                        for e in self.edge_range(v) {
                            p1[self.edge_child[e] as usize] = true;
                        }
                    }
                }
                if p0[v] {
                    if absorb[v] {
                        if !exempt[v] {
                            if bad[v] && !until[v] {
                                return true;
                            }
                            if !until[v] {
                                for e in self.edge_range(v) {
                                    p1[self.edge_child[e] as usize] = true;
                                }
                            }
                        }
                    } else {
                        for e in self.edge_range(v) {
                            p0[self.edge_child[e] as usize] = true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-step binary tree: 1 + 2 + 4 nodes.
    fn toy_tree() -> DagCore {
        DagCore {
            slices: vec![0..1, 1..3, 3..7],
            edge_start: vec![0, 2, 4, 6, 6, 6, 6, 6],
            edge_child: vec![1, 2, 3, 4, 5, 6],
            edge_prob: vec![0.5; 6],
            edge_incr: vec![],
            asset_dim: 0,
        }
    }

    #[test]
    fn node_mass_sums_to_one_per_slice() {
        let g = toy_tree();
        let mass = g.node_mass(&g.edge_prob);
        for k in 0..=g.steps() {
            let s: f64 = g.slice(k).map(|v| mass[v]).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn time_of_matches_slice() {
        let g = toy_tree();
        assert_eq!(g.time_of(0), 0);
        assert_eq!(g.time_of(2), 1);
        assert_eq!(g.time_of(6), 2);
    }

    #[test]
    fn strict_precedence_detects_paths() {
        let g = toy_tree();
        let mut a = vec![false; 7];
        let mut b = vec![false; 7];
        a[1] = true; // first hits node 1 (left child at t=1)
        b[3] = true;
        b[4] = true;
        b[5] = true;
        b[6] = true; // second stops at t=2 only
        assert!(g.exists_path_hit_strictly_before(&a, &b));
        // second always stops at the root: nothing can strictly precede it
        let mut b2 = vec![false; 7];
        b2[0] = true;
        assert!(!g.exists_path_hit_strictly_before(&a, &b2));
    }
}
