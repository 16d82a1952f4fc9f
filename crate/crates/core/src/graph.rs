//! Affinity graphs built from neighborhood representations.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::sample_uniform_sphere;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neighbors::{abs_correlations, order_by_correlation, NeighborhoodResult};
use crate::numerics::RealMatrix;
use crate::rng::derive_seed;

/// Symmetric, nonnegative adjacency matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    adjacency: RealMatrix,
}

impl AffinityGraph {
    /// Validate and wrap an adjacency matrix.
    pub fn from_adjacency(adjacency: RealMatrix) -> Result<Self> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(Error::invalid("adjacency must be square"));
        }
        for j in 0..n {
            if adjacency[(j, j)] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal entry at {j}")));
            }
            for i in 0..n {
                let v = adjacency[(i, j)];
                if v < 0.0 {
                    return Err(Error::invalid(format!("negative weight at ({i}, {j})")));
                }
                if v != adjacency[(j, i)] {
                    return Err(Error::invalid(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(AffinityGraph { adjacency })
    }

    pub fn adjacency(&self) -> &RealMatrix {
        &self.adjacency
    }

    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Neighbors of `i` with positive weight.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        // Column i equals row i by symmetry and is contiguous.
        self.adjacency
            .column(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(k, _)| k)
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.adjacency.column(i).iter().sum())
            .collect()
    }

    /// Copy with every weight at or below `threshold` set to zero.
    pub fn pruned(&self, threshold: f64) -> AffinityGraph {
        let data = self
            .adjacency
            .as_slice()
            .iter()
            .map(|&w| if w > threshold { w } else { 0.0 })
            .collect();
        let n = self.len();
        AffinityGraph {
            adjacency: RealMatrix::from_column_major(n, n, data).expect("finite weights"),
        }
    }

    /// Edge list `i,j,weight` with `i < j`, one row per positive weight.
    pub fn write_edge_list<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "weight"])?;
        for j in 0..self.len() {
            for i in 0..j {
                let v = self.adjacency[(i, j)];
                if v > 0.0 {
                    w.write_record(&[i.to_string(), j.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `A = Z + Zᵀ` where column `j` of `Z` holds `|coefficients|` of point `j`
/// at its selected indices.
pub fn build_adjacency(results: &[NeighborhoodResult], n: usize) -> Result<AffinityGraph> {
    let mut z = vec![0.0; n * n];
    let mut seen = vec![false; n];
    for r in results {
        let j = r.point_index;
        if j >= n {
            return Err(Error::invalid(format!(
                "point index {j} out of range for {n} nodes"
            )));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid(format!("point {j} appears twice")));
        }
        if r.selected.len() != r.coefficients.len() {
            return Err(Error::invalid(format!(
                "point {j}: {} indices but {} coefficients",
                r.selected.len(),
                r.coefficients.len()
            )));
        }
        for (&i, &c) in r.selected.iter().zip(&r.coefficients) {
            if i >= n {
                return Err(Error::invalid(format!(
                    "neighbor index {i} out of range for {n} nodes"
                )));
            }
            z[j * n + i] = c.abs();
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("no neighborhood for point {j}")));
    }
    let mut a = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            if i != j {
                // Same operands in both orders, so A is exactly symmetric.
                a[j * n + i] = z[j * n + i] + z[i * n + j];
            }
        }
    }
    Ok(AffinityGraph {
        adjacency: RealMatrix::from_column_major(n, n, a)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentLabeling {
    /// Component id per node; ids are numbered in order of each component's
    /// smallest node.
    pub component_id: Vec<usize>,
    pub component_count: usize,
}

pub fn connected_components(g: &AffinityGraph) -> ComponentLabeling {
    let n = g.len();
    let mut id = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if id[start] != usize::MAX {
            continue;
        }
        id[start] = count;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for v in g.neighbors(u) {
                if id[v] == usize::MAX {
                    id[v] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    ComponentLabeling {
        component_id: id,
        component_count: count,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiagnosticsReport {
    /// Unordered pairs with positive weight whose endpoints carry different labels.
    pub false_connection_count: usize,
    /// Whether the subgraph induced by each ground-truth cluster is connected.
    pub per_cluster_connected: Vec<bool>,
    pub exact_component_match: bool,
}

/// Compare the graph against ground-truth labels.
pub fn diagnostics(g: &AffinityGraph, truth: &[usize]) -> Result<DiagnosticsReport> {
    let n = g.len();
    if truth.len() != n {
        return Err(Error::invalid(format!(
            "{} labels for {n} nodes",
            truth.len()
        )));
    }
    let mut false_connection_count = 0;
    for j in 0..n {
        for i in g.neighbors(j).filter(|&i| i < j) {
            if truth[i] != truth[j] {
                false_connection_count += 1;
            }
        }
    }

    let k = truth.iter().max().map_or(0, |&v| v + 1);
    let mut per_cluster_connected = vec![true; k];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    for (label, connected) in per_cluster_connected.iter_mut().enumerate() {
        let Some(start) = truth.iter().position(|&t| t == label) else {
            continue;
        };
        let mut reached = 1;
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for v in g.neighbors(u) {
                if truth[v] == label && !visited[v] {
                    visited[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        *connected = reached == truth.iter().filter(|&&t| t == label).count();
    }

    let exact_component_match =
        false_connection_count == 0 && per_cluster_connected.iter().all(|&c| c);
    Ok(DiagnosticsReport {
        false_connection_count,
        per_cluster_connected,
        exact_component_match,
    })
}

/// Whether the union k-nearest-neighbor graph of `points` (pseudo-distance
/// `arccos |⟨a_i, a_j⟩|`) is connected.
pub fn knn_graph_connected(points: &Dataset, k: usize) -> bool {
    let n = points.len();
    let mut adj = vec![Vec::new(); n];
    for j in 0..n {
        let order = order_by_correlation(&abs_correlations(points, j), j);
        for &i in order.iter().take(k) {
            adj[j].push(i);
            adj[i].push(j);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                stack.push(v);
            }
        }
    }
    reached == n
}

/// Fraction of `trials` in which the union kNN graph on `n` uniform points
/// of the sphere in R^d is connected.
pub fn lemma1_connectivity(n: usize, d: usize, k: usize, trials: usize, seed: u64) -> Result<f64> {
    if d <= 1 {
        return Err(Error::invalid(format!("dimension must exceed 1, got {d}")));
    }
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ n − 1 (n={n}, k={k})")));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let connected: Result<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let pts = sample_uniform_sphere(d, n, derive_seed(seed, &[t as u64]))?;
            Ok(knn_graph_connected(&Dataset::new(pts, None)?, k))
        })
        .collect();
    let hits = connected?.into_iter().filter(|&c| c).count();
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nr(j: usize, sel: &[usize], coef: &[f64]) -> NeighborhoodResult {
        NeighborhoodResult {
            point_index: j,
            selected: sel.to_vec(),
            q: sel.len(),
            coefficients: coef.to_vec(),
            residual_trace: vec![0.0; sel.len()],
            truncated: false,
        }
    }

    fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> AffinityGraph {
        let mut a = vec![0.0; n * n];
        for &(i, j) in edges {
            a[j * n + i] = 1.0;
            a[i * n + j] = 1.0;
        }
        AffinityGraph::from_adjacency(RealMatrix::from_column_major(n, n, a).unwrap()).unwrap()
    }

    #[test]
    fn mutual_selection_sums_both_directions() {
        let g = build_adjacency(&[nr(0, &[1], &[-0.5]), nr(1, &[0], &[0.5])], 2).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn one_sided_selection_keeps_edge() {
        let g = build_adjacency(
            &[
                nr(0, &[1], &[0.3]),
                nr(1, &[2], &[0.0]),
                nr(2, &[1], &[0.0]),
            ],
            3,
        )
        .unwrap();
        assert_eq!(g.weight(0, 1), 0.3);
        assert_eq!(g.weight(1, 0), 0.3);
    }

    #[test]
    fn zero_coefficients_give_isolated_nodes() {
        let rs: Vec<_> = (0..4).map(|j| nr(j, &[(j + 1) % 4], &[0.0])).collect();
        let g = build_adjacency(&rs, 4).unwrap();
        assert!(g.adjacency().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(connected_components(&g).component_count, 4);
    }

    #[test]
    fn build_adjacency_errors() {
        assert!(build_adjacency(&[nr(0, &[3], &[1.0]), nr(1, &[0], &[1.0])], 2).is_err());
        assert!(build_adjacency(&[nr(0, &[1], &[1.0])], 2).is_err());
        assert!(build_adjacency(&[nr(0, &[1], &[1.0]), nr(0, &[1], &[1.0])], 2).is_err());
    }

    #[test]
    fn component_examples() {
        let blocks = graph_from_edges(7, &[(0, 1), (2, 3), (3, 4), (5, 6)]);
        let c = connected_components(&blocks);
        assert_eq!(c.component_count, 3);
        assert_eq!(c.component_id, vec![0, 0, 1, 1, 1, 2, 2]);
        assert_eq!(
            connected_components(&graph_from_edges(3, &[(0, 1), (1, 2)])).component_count,
            1
        );
        assert_eq!(
            connected_components(&graph_from_edges(5, &[])).component_count,
            5
        );
    }

    #[test]
    fn component_ids_follow_smallest_member() {
        let g = graph_from_edges(4, &[(0, 3), (1, 2)]);
        assert_eq!(connected_components(&g).component_id, vec![0, 1, 1, 0]);
    }

    #[test]
    fn diagnostics_examples() {
        let truth = [0, 0, 0, 1, 1];
        let ideal = graph_from_edges(5, &[(0, 1), (1, 2), (3, 4)]);
        let d = diagnostics(&ideal, &truth).unwrap();
        assert_eq!(d.false_connection_count, 0);
        assert_eq!(d.per_cluster_connected, vec![true, true]);
        assert!(d.exact_component_match);

        let crossed = graph_from_edges(5, &[(0, 1), (1, 2), (3, 4), (2, 3)]);
        let d = diagnostics(&crossed, &truth).unwrap();
        assert_eq!(d.false_connection_count, 1);
        assert!(!d.exact_component_match);

        let split = graph_from_edges(5, &[(0, 1), (3, 4)]);
        let d = diagnostics(&split, &truth).unwrap();
        assert_eq!(d.per_cluster_connected, vec![false, true]);
        assert!(!d.exact_component_match);

        assert!(diagnostics(&ideal, &truth[..4]).is_err());
    }

    #[test]
    fn edge_list_export() {
        let g = build_adjacency(
            &[
                nr(0, &[1], &[0.5]),
                nr(1, &[0], &[0.25]),
                nr(2, &[1], &[2.0]),
            ],
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "i,j,weight\n0,1,0.75\n1,2,2\n"
        );
    }

    #[test]
    fn pruning_drops_small_weights() {
        let g = build_adjacency(
            &[
                nr(0, &[1], &[1e-4]),
                nr(1, &[2], &[1.0]),
                nr(2, &[1], &[1.0]),
            ],
            3,
        )
        .unwrap();
        assert_eq!(connected_components(&g).component_count, 1);
        assert_eq!(connected_components(&g.pruned(1e-3)).component_count, 2);
    }

    #[test]
    fn complete_knn_graph_is_always_connected() {
        for (n, d) in [(10, 2), (25, 4), (40, 7)] {
            assert_eq!(lemma1_connectivity(n, d, n - 1, 5, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn lemma1_argument_checks() {
        assert!(lemma1_connectivity(10, 1, 3, 5, 0).is_err());
        assert!(lemma1_connectivity(10, 3, 10, 5, 0).is_err());
        assert!(lemma1_connectivity(10, 3, 0, 5, 0).is_err());
    }

    #[test]
    fn lemma1_is_reproducible() {
        let a = lemma1_connectivity(60, 3, 2, 30, 9).unwrap();
        assert_eq!(a, lemma1_connectivity(60, 3, 2, 30, 9).unwrap());
    }
}
