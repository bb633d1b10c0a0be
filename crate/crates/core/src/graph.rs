//! k-nearest-neighbor graphs over dissimilarity matrices.

use std::cmp::Ordering;
use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::datasets::DissimilarityMatrix;
use crate::error::{MmsjError, Result};

/// Boolean adjacency selected by k-nearest-neighbor search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    adjacency: Array2<bool>,
    k: usize,
    symmetrized: bool,
}

impl NeighborGraph {
    /// Builds a graph from an explicit adjacency, clearing the diagonal.
    pub fn from_adjacency(mut adjacency: Array2<bool>, k: usize) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(MmsjError::InvalidMatrix("adjacency must be square".into()));
        }
        for i in 0..adjacency.nrows() {
            adjacency[[i, i]] = false;
        }
        let symmetrized = adjacency == adjacency.t();
        Ok(Self { adjacency, k, symmetrized })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn adjacency(&self) -> &Array2<bool> {
        &self.adjacency
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[[i, j]]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(i).into_iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&e| e).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    /// Makes every selected edge two-way (logical OR with the transpose).
    pub fn symmetrize(mut self) -> Self {
        let n = self.n();
        for i in 0..n {
            for j in (i + 1)..n {
                let e = self.adjacency[[i, j]] || self.adjacency[[j, i]];
                self.adjacency[[i, j]] = e;
                self.adjacency[[j, i]] = e;
            }
        }
        self.symmetrized = true;
        self
    }

    /// Adjacency lists, one sorted list per vertex.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|i| self.neighbors(i).collect()).collect()
    }
}

/// Indices of the `k` smallest entries of `row` excluding `skip`, ordered by
/// (value, index) so ties go to the lower index.
pub fn k_smallest(row: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..row.len()).filter(|&q| Some(q) != skip).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering { row[*a].total_cmp(&row[*b]).then(a.cmp(b)) };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    candidates
}

/// Directed k-NN selection on a score matrix (each row gets exactly `k`
/// out-edges, self excluded).
pub fn knn_directed(scores: ArrayView2<f64>, k: usize) -> Result<NeighborGraph> {
    let n = scores.nrows();
    if scores.ncols() != n {
        return Err(MmsjError::SizeMismatch(format!("score matrix is {}x{}", n, scores.ncols())));
    }
    if k == 0 || k >= n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    let selections: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = scores.row(i).to_vec();
            k_smallest(&row, k, Some(i))
        })
        .collect();
    let mut adjacency = Array2::from_elem((n, n), false);
    for (i, sel) in selections.into_iter().enumerate() {
        for j in sel {
            adjacency[[i, j]] = true;
        }
    }
    Ok(NeighborGraph {
        adjacency,
        k,
        symmetrized: false,
    })
}

/// Joint neighborhood selection: k-NN on `Δ₁ + Δ₂`, OR-symmetrized.
/// Both inputs must already be unit-Frobenius scaled.
pub fn joint_knn(d1: &DissimilarityMatrix, d2: &DissimilarityMatrix, k: usize) -> Result<NeighborGraph> {
    if d1.n() != d2.n() {
        return Err(MmsjError::SizeMismatch(format!("{} vs {} objects", d1.n(), d2.n())));
    }
    if !d1.is_scaled() || !d2.is_scaled() {
        return Err(MmsjError::ValidationError(
            "joint neighborhood selection requires unit-Frobenius scaled inputs".into(),
        ));
    }
    let joint = d1.values() + d2.values();
    Ok(knn_directed(joint.view(), k)?.symmetrize())
}

/// k-NN within a single space, OR-symmetrized.
pub fn separate_knn(d: &DissimilarityMatrix, k: usize) -> Result<NeighborGraph> {
    Ok(knn_directed(d.values().view(), k)?.symmetrize())
}

/// Connected-component label for each vertex, dense from 0 in order of the
/// lowest vertex of each component. Edges are followed in either direction.
pub fn connected_components(g: &NeighborGraph) -> Vec<usize> {
    let n = g.n();
    let adj = g.adjacency();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for u in 0..n {
                if (adj[[v, u]] || adj[[u, v]]) && labels[u] == usize::MAX {
                    labels[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    labels
}

/// Component sizes in label order.
pub fn component_sizes(labels: &[usize]) -> Vec<usize> {
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0; count];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::scale_unit_frobenius;
    use ndarray::array;

    fn dm(values: Array2<f64>) -> DissimilarityMatrix {
        DissimilarityMatrix::new(values).unwrap()
    }

    #[test]
    fn full_neighborhood_is_complete() {
        let d = scale_unit_frobenius(&dm(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])).unwrap();
        let g = joint_knn(&d, &d, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.has_edge(i, j), i != j);
            }
        }
        assert_eq!(separate_knn(&d, 2).unwrap(), g);
    }

    #[test]
    fn unique_minimum_is_selected() {
        // joint row 0 = (0, 0.2, 0.9)
        let d1 = dm(array![[0.0, 0.1, 0.45], [0.1, 0.0, 0.3], [0.45, 0.3, 0.0]]).assume_scaled();
        let g = knn_directed((d1.values() + d1.values()).view(), 1).unwrap();
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(0, 2));
        assert!(joint_knn(&d1, &d1, 1).is_ok());
    }

    #[test]
    fn chain_tie_goes_to_lower_index() {
        let d = dm(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]);
        let directed = knn_directed(d.values().view(), 1).unwrap();
        assert!(directed.has_edge(0, 1));
        assert!(directed.has_edge(1, 0));
        assert!(!directed.has_edge(1, 2));
        assert!(directed.has_edge(2, 1));
        let g = directed.symmetrize();
        assert_eq!(g.edge_count(), 4);
        assert!(g.has_edge(1, 2) && g.has_edge(0, 1) && !g.has_edge(0, 2));
    }

    #[test]
    fn argument_errors() {
        let a = dm(array![[0.0, 1.0], [1.0, 0.0]]);
        let b = dm(array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        let (sa, sb) = (scale_unit_frobenius(&a).unwrap(), scale_unit_frobenius(&b).unwrap());
        assert!(matches!(joint_knn(&sa, &sb, 1), Err(MmsjError::SizeMismatch(_))));
        assert!(matches!(joint_knn(&a, &a, 1), Err(MmsjError::ValidationError(_))));
        assert!(matches!(joint_knn(&sa, &sa, 2), Err(MmsjError::InvalidArgument(_))));
        assert!(matches!(separate_knn(&a, 0), Err(MmsjError::InvalidArgument(_))));
    }

    #[test]
    fn components() {
        let complete = NeighborGraph::from_adjacency(Array2::from_elem((4, 4), true), 3).unwrap();
        assert_eq!(connected_components(&complete), vec![0; 4]);

        let empty = NeighborGraph::from_adjacency(Array2::from_elem((4, 4), false), 1).unwrap();
        assert_eq!(connected_components(&empty), vec![0, 1, 2, 3]);

        let mut adj = Array2::from_elem((6, 6), false);
        for &(a, b) in &[(0, 2), (2, 4), (4, 0), (1, 3), (3, 5), (5, 1)] {
            adj[[a, b]] = true;
            adj[[b, a]] = true;
        }
        let g = NeighborGraph::from_adjacency(adj, 2).unwrap();
        let labels = connected_components(&g);
        assert_eq!(labels, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(component_sizes(&labels), vec![3, 3]);
    }

    #[test]
    fn k_smallest_orders_by_value_then_index() {
        assert_eq!(k_smallest(&[3.0, 1.0, 1.0, 0.5], 3, None), vec![3, 1, 2]);
        assert_eq!(k_smallest(&[0.0, 1.0, 1.0], 1, Some(0)), vec![1]);
        assert_eq!(k_smallest(&[2.0, 1.0], 5, None), vec![1, 0]);
    }
}
