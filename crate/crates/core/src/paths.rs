//! Shortest-path (geodesic) distances over a neighbor graph.
//!
//! Edge weights come from a dissimilarity matrix restricted to the graph's
//! edges. Floyd-Warshall is the dense reference; Dijkstra from every source
//! gives the same matrix and is much faster on sparse k-NN graphs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DissimilarityMatrix;
use crate::error::{MmsjError, Result};
use crate::graph::{k_smallest, NeighborGraph};
use crate::linalg::Matrix;

/// All-pairs shortest-path distances; `+Inf` between disconnected vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicMatrix {
    values: Matrix,
    source_graph_k: usize,
}

impl GeodesicMatrix {
    pub(crate) fn from_parts(values: Matrix, source_graph_k: usize) -> Self {
        Self { values, source_graph_k }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn source_graph_k(&self) -> usize {
        self.source_graph_k
    }

    /// Multiplies every distance by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.mapv(|x| x * factor),
            source_graph_k: self.source_graph_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathAlgorithm {
    Floyd,
    #[default]
    Dijkstra,
}

fn check_inputs(d: &DissimilarityMatrix, g: &NeighborGraph) -> Result<()> {
    if d.n() != g.n() {
        return Err(MmsjError::SizeMismatch(format!(
            "dissimilarities cover {} objects, graph has {} vertices",
            d.n(),
            g.n()
        )));
    }
    if !g.is_symmetrized() {
        return Err(MmsjError::InvalidArgument("shortest paths need a symmetrized graph".into()));
    }
    Ok(())
}

/// Floyd-Warshall over the weighted graph `(g, d)`.
pub fn floyd_shortest_paths(d: &DissimilarityMatrix, g: &NeighborGraph) -> Result<GeodesicMatrix> {
    check_inputs(d, g)?;
    let n = d.n();
    let w = d.values();
    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in 0..n {
            if g.has_edge(i, j) {
                dist[i * n + j] = w[[i, j]];
            }
        }
        dist[i * n + i] = 0.0;
    }
    let mut via = vec![0.0; n];
    for q in 0..n {
        via.copy_from_slice(&dist[q * n..(q + 1) * n]);
        for i in 0..n {
            let d_iq = dist[i * n + q];
            if d_iq == f64::INFINITY {
                continue;
            }
            let row = &mut dist[i * n..(i + 1) * n];
            for (cell, &d_qj) in row.iter_mut().zip(via.iter()) {
                let candidate = d_iq + d_qj;
                if candidate < *cell {
                    *cell = candidate;
                }
            }
        }
    }
    let values = Array2::from_shape_vec((n, n), dist).expect("n*n buffer");
    Ok(GeodesicMatrix::from_parts(values, g.k()))
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn weighted_lists(d: &DissimilarityMatrix, g: &NeighborGraph) -> Vec<Vec<(usize, f64)>> {
    let w = d.values();
    (0..g.n())
        .map(|i| g.neighbors(i).map(|j| (j, w[[i, j]])).collect())
        .collect()
}

fn dijkstra_from(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let candidate = du + w;
            if candidate < dist[v] {
                dist[v] = candidate;
                heap.push(Frontier { dist: candidate, node: v });
            }
        }
    }
    dist
}

/// Single-source shortest paths from each of `sources`; row `r` of the result
/// holds distances from `sources[r]`.
pub fn dijkstra_shortest_paths(d: &DissimilarityMatrix, g: &NeighborGraph, sources: &[usize]) -> Result<Matrix> {
    check_inputs(d, g)?;
    let n = d.n();
    if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
        return Err(MmsjError::InvalidArgument(format!("source {bad} out of range for {n} vertices")));
    }
    if d.values().iter().any(|&x| x < 0.0) {
        return Err(MmsjError::InvalidArgument("negative edge weight".into()));
    }
    let adj = weighted_lists(d, g);
    let rows: Vec<Vec<f64>> = sources.par_iter().map(|&s| dijkstra_from(&adj, s)).collect();
    Ok(Array2::from_shape_vec((sources.len(), n), rows.into_iter().flatten().collect()).expect("rows of length n"))
}

/// All-pairs shortest paths with the chosen algorithm.
pub fn all_pairs_shortest_paths(
    d: &DissimilarityMatrix,
    g: &NeighborGraph,
    algorithm: PathAlgorithm,
) -> Result<GeodesicMatrix> {
    match algorithm {
        PathAlgorithm::Floyd => floyd_shortest_paths(d, g),
        PathAlgorithm::Dijkstra => {
            let sources: Vec<usize> = (0..d.n()).collect();
            let mut values = dijkstra_shortest_paths(d, g, &sources)?;
            // Identical sums along mirrored paths, but keep exact symmetry.
            let n = values.nrows();
            for i in 0..n {
                for j in (i + 1)..n {
                    let m = values[[i, j]].min(values[[j, i]]);
                    values[[i, j]] = m;
                    values[[j, i]] = m;
                }
            }
            Ok(GeodesicMatrix::from_parts(values, g.k()))
        }
    }
}

/// Errors with the component sizes if any off-diagonal distance is infinite.
pub fn assert_connected(gm: &GeodesicMatrix) -> Result<()> {
    let n = gm.n();
    let v = gm.values();
    if v.iter().all(|x| x.is_finite()) {
        return Ok(());
    }
    let mut labels = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for i in 0..n {
        if labels[i] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        for j in i..n {
            if labels[j] == usize::MAX && v[[i, j]].is_finite() {
                labels[j] = label;
                size += 1;
            }
        }
        sizes.push(size);
    }
    Err(MmsjError::DisconnectedGraph {
        component_sizes: sizes,
        k: Some(gm.source_graph_k()),
    })
}

/// Shortest-path distances from a new point to every vertex of the graph.
///
/// The point is attached to its `k` nearest vertices (ties to the lower index)
/// with edge weights `dist_to_vertices`; distances then run through `gm`.
pub fn geodesics_from_new_point(gm: &GeodesicMatrix, dist_to_vertices: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = gm.n();
    if dist_to_vertices.len() != n {
        return Err(MmsjError::SizeMismatch(format!(
            "{} distances for {n} training points",
            dist_to_vertices.len()
        )));
    }
    if dist_to_vertices.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(MmsjError::InvalidArgument("distances to training points must be finite and >= 0".into()));
    }
    if k == 0 {
        return Err(MmsjError::InvalidArgument("k must be >= 1".into()));
    }
    let attach = k_smallest(dist_to_vertices, k.min(n), None);
    let values = gm.values();
    let mut out = vec![f64::INFINITY; n];
    for &q in &attach {
        let dq = dist_to_vertices[q];
        for (cell, &g_qj) in out.iter_mut().zip(values.row(q).iter()) {
            let candidate = dq + g_qj;
            if candidate < *cell {
                *cell = candidate;
            }
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        let reached = out.iter().filter(|x| x.is_finite()).count();
        return Err(MmsjError::DisconnectedGraph {
            component_sizes: vec![reached, n - reached],
            k: Some(k),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path_graph() -> (DissimilarityMatrix, NeighborGraph) {
        let d = DissimilarityMatrix::new(array![[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]).unwrap();
        let adj = array![[false, true, false], [true, false, true], [false, true, false]];
        (d, NeighborGraph::from_adjacency(adj, 1).unwrap())
    }

    #[test]
    fn path_graph_distances() {
        let (d, g) = path_graph();
        let f = floyd_shortest_paths(&d, &g).unwrap();
        assert_eq!(f.values()[[0, 2]], 2.0);
        let rows = dijkstra_shortest_paths(&d, &g, &[0]).unwrap();
        assert_eq!(rows.row(0).to_vec(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn complete_graph_on_metric_is_identity_map() {
        let d = DissimilarityMatrix::new(array![[0.0, 1.0, 1.5], [1.0, 0.0, 1.0], [1.5, 1.0, 0.0]]).unwrap();
        let g = NeighborGraph::from_adjacency(Array2::from_elem((3, 3), true), 2).unwrap();
        assert_eq!(floyd_shortest_paths(&d, &g).unwrap().values(), d.values());
    }

    #[test]
    fn isolated_vertex() {
        let d = DissimilarityMatrix::new(array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        let adj = array![[false, true, false], [true, false, false], [false, false, false]];
        let g = NeighborGraph::from_adjacency(adj, 1).unwrap();
        let rows = dijkstra_shortest_paths(&d, &g, &[2]).unwrap();
        assert_eq!(rows.row(0).to_vec(), vec![f64::INFINITY, f64::INFINITY, 0.0]);
        let gm = floyd_shortest_paths(&d, &g).unwrap();
        match assert_connected(&gm) {
            Err(MmsjError::DisconnectedGraph { component_sizes, .. }) => assert_eq!(component_sizes, vec![2, 1]),
            other => panic!("expected DisconnectedGraph, got {other:?}"),
        }
    }

    #[test]
    fn connected_and_trivial_cases_pass() {
        let (d, g) = path_graph();
        assert!(assert_connected(&floyd_shortest_paths(&d, &g).unwrap()).is_ok());
        let single = GeodesicMatrix::from_parts(Matrix::zeros((1, 1)), 1);
        assert!(assert_connected(&single).is_ok());
    }

    #[test]
    fn input_checks() {
        let (d, _) = path_graph();
        let unsym = NeighborGraph::from_adjacency(array![[false, true, false], [false, false, true], [false, false, false]], 1).unwrap();
        assert!(matches!(floyd_shortest_paths(&d, &unsym), Err(MmsjError::InvalidArgument(_))));
        let small = NeighborGraph::from_adjacency(Array2::from_elem((2, 2), true), 1).unwrap();
        assert!(matches!(floyd_shortest_paths(&d, &small), Err(MmsjError::SizeMismatch(_))));
        assert!(matches!(dijkstra_shortest_paths(&d, &small, &[0]), Err(MmsjError::SizeMismatch(_))));
    }

    #[test]
    fn new_point_through_graph() {
        let (d, g) = path_graph();
        let gm = floyd_shortest_paths(&d, &g).unwrap();
        // A copy of vertex 0 attached to its single nearest vertex.
        let out = geodesics_from_new_point(&gm, &[0.0, 1.0, 5.0], 1).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 2.0]);
        assert!(geodesics_from_new_point(&gm, &[0.0, f64::NAN, 1.0], 1).is_err());
    }
}
