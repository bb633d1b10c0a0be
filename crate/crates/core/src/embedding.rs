//! Low-dimensional embeddings: classical MDS (with out-of-sample extension),
//! Isomap and locally linear embedding.

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datasets::{DissimilarityMatrix, PointCloud};
use crate::error::{MmsjError, Result};
use crate::graph::{component_sizes, connected_components, k_smallest, separate_knn, NeighborGraph};
use crate::linalg::{solve_spd, sym_eig_largest, sym_eig_smallest, Matrix};
use crate::paths::{all_pairs_shortest_paths, assert_connected, geodesics_from_new_point, GeodesicMatrix, PathAlgorithm};

/// Anything holding an `n × n` distance matrix.
pub trait DistanceSource {
    fn distances(&self) -> &Matrix;
}

impl DistanceSource for DissimilarityMatrix {
    fn distances(&self) -> &Matrix {
        self.values()
    }
}

impl DistanceSource for GeodesicMatrix {
    fn distances(&self) -> &Matrix {
        self.values()
    }
}

impl DistanceSource for Matrix {
    fn distances(&self) -> &Matrix {
        self
    }
}

/// Coordinates of `n` objects in `R^d`, one row per object.
///
/// `eigenvalues` carries one spectral value per column: the eigenvalues of
/// the double-centered matrix for MDS (descending), the reconstruction-cost
/// eigenvalues for LLE (ascending, smaller is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    #[serde(with = "crate::serde_nested::matrix")]
    pub coords: Matrix,
    pub eigenvalues: Vec<f64>,
    pub centered: bool,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Spectral data needed to place new points into an MDS configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsModel {
    /// Column means of the training squared-distance matrix.
    pub sq_dist_means: Vec<f64>,
    pub grand_mean: f64,
    /// Eigenvectors for the retained (positive) eigenvalues, `n × r`.
    #[serde(with = "crate::serde_nested::matrix")]
    pub eigenvectors: Matrix,
    pub eigenvalues: Vec<f64>,
    /// Requested dimension; columns beyond `eigenvalues.len()` are zero.
    pub dim: usize,
}

impl MdsModel {
    pub fn n_train(&self) -> usize {
        self.sq_dist_means.len()
    }
}

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const POSITIVE_EIGENVALUE_RTOL: f64 = 1e-10;

/// Classical (Torgerson) MDS.
///
/// `B = −½ J D² J` with `J = I − 11ᵀ/n`; the embedding uses the top `d`
/// eigenpairs, column `j` being `v_j √λ_j`. Non-positive eigenvalues give
/// zero columns (with a warning).
pub fn classical_mds<D: DistanceSource + ?Sized>(dm: &D, d: usize) -> Result<(Embedding, MdsModel)> {
    let dist = dm.distances();
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(MmsjError::InvalidMatrix(format!("distance matrix is {}x{}", n, dist.ncols())));
    }
    if d == 0 || d >= n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= d < n, got d = {d}, n = {n}")));
    }
    if dist.iter().any(|x| x.is_nan()) {
        return Err(MmsjError::InvalidMatrix("NaN distance".into()));
    }
    if dist.iter().any(|x| x.is_infinite()) {
        let gm = GeodesicMatrix::from_parts(dist.clone(), 0);
        return Err(match assert_connected(&gm) {
            Err(MmsjError::DisconnectedGraph { component_sizes, .. }) => {
                MmsjError::DisconnectedGraph { component_sizes, k: None }
            }
            _ => MmsjError::InvalidMatrix("infinite distance".into()),
        });
    }
    let sq = dist.mapv(|x| x * x);
    let means: Array1<f64> = sq.mean_axis(Axis(0)).expect("n > 0");
    let grand = means.mean().expect("n > 0");
    let mut b = sq;
    for ((i, j), v) in b.indexed_iter_mut() {
        *v = -0.5 * (*v - means[i] - means[j] + grand);
    }
    let eig = sym_eig_largest(b.view(), d)?;
    let top = eig.values[0].max(0.0);
    let retained = eig
        .values
        .iter()
        .take_while(|&&l| l > POSITIVE_EIGENVALUE_RTOL * top && l > 0.0)
        .count();
    if retained < d {
        log::warn!("classical MDS: only {retained} of {d} eigenvalues are positive; padding with zero columns");
    }
    let mut coords = Matrix::zeros((n, d));
    for j in 0..retained {
        let s = eig.values[j].sqrt();
        coords.column_mut(j).assign(&eig.vectors.column(j).mapv(|v| v * s));
    }
    let embedding = Embedding {
        coords,
        eigenvalues: eig.values.to_vec(),
        centered: true,
    };
    let model = MdsModel {
        sq_dist_means: means.to_vec(),
        grand_mean: grand,
        eigenvectors: eig.vectors.slice(ndarray::s![.., ..retained]).to_owned(),
        eigenvalues: eig.values.iter().take(retained).copied().collect(),
        dim: d,
    };
    Ok((embedding, model))
}

/// Places a new point given its distances to the training points:
/// `−½ Λ^{-1/2} Vᵀ (δ² − mean_col(D²))`.
pub fn mds_out_of_sample(model: &MdsModel, dist_to_train: &[f64]) -> Result<Array1<f64>> {
    let n = model.n_train();
    if dist_to_train.len() != n {
        return Err(MmsjError::SizeMismatch(format!("{} distances for {n} training points", dist_to_train.len())));
    }
    if dist_to_train.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(MmsjError::InvalidArgument("distances must be finite and >= 0".into()));
    }
    let centered: Array1<f64> = dist_to_train
        .iter()
        .zip(&model.sq_dist_means)
        .map(|(d, m)| d * d - m)
        .collect();
    let mut out = Array1::zeros(model.dim);
    for (j, &lambda) in model.eigenvalues.iter().enumerate() {
        out[j] = -0.5 * model.eigenvectors.column(j).dot(&centered) / lambda.sqrt();
    }
    Ok(out)
}

/// Isomap fitted on one space: separate k-NN graph, geodesics, MDS.
#[derive(Debug, Clone)]
pub struct IsomapModel {
    pub k: usize,
    pub graph: NeighborGraph,
    pub geodesics: GeodesicMatrix,
    pub mds: MdsModel,
    pub embedding: Embedding,
}

impl IsomapModel {
    /// Attaches a new point to its k nearest training points and embeds its
    /// geodesic distances out of sample.
    pub fn out_of_sample(&self, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        let geo = geodesics_from_new_point(&self.geodesics, dist_to_train, self.k)?;
        mds_out_of_sample(&self.mds, &geo)
    }
}

pub fn isomap_embed(d: &DissimilarityMatrix, k: usize, dim: usize, algorithm: PathAlgorithm) -> Result<IsomapModel> {
    let graph = separate_knn(d, k)?;
    let geodesics = all_pairs_shortest_paths(d, &graph, algorithm)?;
    assert_connected(&geodesics).map_err(|e| e.with_k(k))?;
    let (embedding, mds) = classical_mds(&geodesics, dim)?;
    Ok(IsomapModel {
        k,
        graph,
        geodesics,
        mds,
        embedding,
    })
}

/// Input to LLE: a distance matrix or raw coordinates.
#[derive(Debug, Clone, Copy)]
pub enum LleInput<'a> {
    Distances(&'a DissimilarityMatrix),
    Points(&'a PointCloud),
}

/// Relative Tikhonov regularization of the local Gram matrices.
pub const LLE_REGULARIZATION: f64 = 1e-3;

/// Locally linear embedding fitted on one space.
#[derive(Debug, Clone)]
pub struct LleModel {
    pub k: usize,
    pub embedding: Embedding,
    /// Squared distances among training points, used for out-of-sample weights.
    train_sq: Matrix,
}

/// Barycentric weights reconstructing a point from `neighbors`.
///
/// `to_point_sq[a]` is the squared distance from the point to neighbor `a`;
/// the local Gram `C_ab = (z_a − x)·(z_b − x)` follows from the law of
/// cosines, so only distances are needed.
fn reconstruction_weights(to_point_sq: &[f64], neighbors: &[usize], train_sq: ArrayView2<f64>) -> Result<Vec<f64>> {
    let k = neighbors.len();
    let mut gram = Matrix::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            gram[[a, b]] =
                0.5 * (to_point_sq[a] + to_point_sq[b] - train_sq[[neighbors[a], neighbors[b]]]);
        }
    }
    let trace: f64 = (0..k).map(|a| gram[[a, a]]).sum();
    let reg = if trace > 0.0 { LLE_REGULARIZATION * trace } else { LLE_REGULARIZATION };
    for a in 0..k {
        gram[[a, a]] += reg;
    }
    let w = solve_spd(gram.view(), &vec![1.0; k])?;
    let total: f64 = w.sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(MmsjError::Numerical("degenerate LLE reconstruction weights".into()));
    }
    Ok(w.iter().map(|x| x / total).collect())
}

impl LleModel {
    pub fn n_train(&self) -> usize {
        self.train_sq.nrows()
    }

    /// Reconstructs a new point from its k nearest training points and
    /// applies the same weights to their embedded coordinates.
    pub fn out_of_sample(&self, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        let n = self.n_train();
        if dist_to_train.len() != n {
            return Err(MmsjError::SizeMismatch(format!("{} distances for {n} training points", dist_to_train.len())));
        }
        if dist_to_train.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MmsjError::InvalidArgument("distances must be finite and >= 0".into()));
        }
        let neighbors = k_smallest(dist_to_train, self.k.min(n), None);
        let to_sq: Vec<f64> = neighbors.iter().map(|&q| dist_to_train[q] * dist_to_train[q]).collect();
        let w = reconstruction_weights(&to_sq, &neighbors, self.train_sq.view())?;
        let mut out = Array1::zeros(self.embedding.dim());
        for (&q, &wq) in neighbors.iter().zip(&w) {
            out.scaled_add(wq, &self.embedding.coords.row(q));
        }
        Ok(out)
    }
}

/// Locally linear embedding with unit-covariance output.
///
/// Weights use the `k` nearest neighbors (ties to the lower index); the
/// embedding is given by the bottom eigenvectors of `(I − W)ᵀ(I − W)` after
/// discarding the constant one, scaled so that `YᵀY / n = I`.
pub fn lle_embed(input: LleInput<'_>, k: usize, dim: usize) -> Result<LleModel> {
    let train_sq = match input {
        LleInput::Distances(d) => d.values().mapv(|x| x * x),
        LleInput::Points(pc) => crate::datasets::euclidean_distances(pc).values().mapv(|x| x * x),
    };
    let n = train_sq.nrows();
    if k == 0 || k >= n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    if dim == 0 || dim >= k || dim + 1 > n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= dim < k, got dim = {dim}, k = {k}")));
    }
    let graph = crate::graph::knn_directed(train_sq.view(), k)?;
    let labels = connected_components(&graph);
    let sizes = component_sizes(&labels);
    if sizes.len() > 1 {
        return Err(MmsjError::DisconnectedGraph {
            component_sizes: sizes,
            k: Some(k),
        });
    }

    let mut cost = Matrix::eye(n);
    for i in 0..n {
        let neighbors: Vec<usize> = graph.neighbors(i).collect();
        let to_sq: Vec<f64> = neighbors.iter().map(|&q| train_sq[[i, q]]).collect();
        let w = reconstruction_weights(&to_sq, &neighbors, train_sq.view())?;
        // (I − W)ᵀ(I − W) = I − W − Wᵀ + WᵀW
        for (&a, &wa) in neighbors.iter().zip(&w) {
            cost[[i, a]] -= wa;
            cost[[a, i]] -= wa;
            for (&b, &wb) in neighbors.iter().zip(&w) {
                cost[[a, b]] += wa * wb;
            }
        }
    }
    let eig = sym_eig_smallest(cost.view(), dim + 1)?;
    let scale = (n as f64).sqrt();
    let mut coords = eig.vectors.slice(ndarray::s![.., 1..=dim]).mapv(|v| v * scale);
    let means = coords.mean_axis(Axis(0)).expect("n > 0");
    coords -= &means;
    Ok(LleModel {
        k,
        embedding: Embedding {
            coords,
            eigenvalues: eig.values.iter().skip(1).copied().collect(),
            centered: true,
        },
        train_sq,
    })
}
