//! Alignment of two embeddings and the end-to-end matching pipelines.
//!
//! [`mmsj_fit`] runs joint neighborhood selection, per-space shortest paths
//! over the shared graph, classical MDS and an orthogonal alignment.
//! [`baseline_fit`] embeds each space on its own (MDS, Isomap or LLE) and
//! aligns afterwards. Both produce models that map unseen observations from
//! their distances to the training set.

use std::path::Path;

use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::datasets::{scale_unit_frobenius_with_factor, DissimilarityMatrix};
use crate::embedding::{classical_mds, isomap_embed, lle_embed, mds_out_of_sample, Embedding, IsomapModel, LleInput, LleModel, MdsModel};
use crate::error::{MmsjError, Result};
use crate::graph::joint_knn;
use crate::linalg::{frobenius_norm, svd, sym_eig, Matrix};
use crate::paths::{all_pairs_shortest_paths, assert_connected, geodesics_from_new_point, GeodesicMatrix, PathAlgorithm};

pub const MODEL_VERSION: &str = "mmsj-model/1";

/// One of the two observation spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    First,
    Second,
}

impl Space {
    fn index(self) -> usize {
        match self {
            Space::First => 0,
            Space::Second => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentKind {
    #[default]
    Procrustes,
    Cca,
}

/// Linear maps into the shared space: `ŷ = transform · y` per space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub kind: AlignmentKind,
    #[serde(with = "crate::serde_nested::matrix")]
    pub transform1: Matrix,
    #[serde(with = "crate::serde_nested::matrix")]
    pub transform2: Matrix,
    /// Canonical correlations (CCA only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<f64>,
}

impl AlignmentMap {
    pub fn transform(&self, space: Space) -> &Matrix {
        match space {
            Space::First => &self.transform1,
            Space::Second => &self.transform2,
        }
    }

    pub fn apply(&self, space: Space, point: ArrayView1<f64>) -> Array1<f64> {
        self.transform(space).dot(&point)
    }

    /// Maps every row of `coords`.
    pub fn apply_rows(&self, space: Space, coords: &Matrix) -> Matrix {
        coords.dot(&self.transform(space).t())
    }
}

fn check_same_shape(x1: &Embedding, x2: &Embedding) -> Result<()> {
    if x1.coords.dim() != x2.coords.dim() {
        return Err(MmsjError::SizeMismatch(format!(
            "embeddings are {:?} and {:?}",
            x1.coords.dim(),
            x2.coords.dim()
        )));
    }
    Ok(())
}

/// Orthogonal Procrustes: `P = U Vᵀ` from the SVD of `X̃₂ X̃₁ᵀ`, minimizing
/// `‖P X̃₁ − X̃₂‖_F` over orthogonal `P`. Rotation (and reflection) only.
pub fn procrustes(x1: &Embedding, x2: &Embedding) -> Result<AlignmentMap> {
    check_same_shape(x1, x2)?;
    let cross = x2.coords.t().dot(&x1.coords);
    let s = svd(cross.view())?;
    let p = s.u.dot(&s.v.t());
    let d = p.nrows();
    Ok(AlignmentMap {
        kind: AlignmentKind::Procrustes,
        transform1: p,
        transform2: Matrix::eye(d),
        correlations: Vec::new(),
    })
}

/// Relative ridge added to a singular covariance matrix.
const CCA_RIDGE: f64 = 1e-8;

fn centered(m: &Matrix) -> Matrix {
    let means = m.mean_axis(Axis(0)).expect("nonempty");
    m - &means
}

/// `C^{-1/2}` of a covariance matrix, ridged when singular.
fn inverse_sqrt(cov: &Matrix) -> Result<Matrix> {
    let d = cov.nrows();
    let trace: f64 = cov.diag().sum();
    let mut c = cov.clone();
    let eig = sym_eig(c.view())?;
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12 * trace) {
        let ridge = if trace > 0.0 { CCA_RIDGE * trace } else { CCA_RIDGE };
        for i in 0..d {
            c[[i, i]] += ridge;
        }
    }
    let eig = sym_eig(c.view())?;
    let scaled = &eig.vectors * &eig.values.mapv(|l| 1.0 / l.sqrt());
    Ok(scaled.dot(&eig.vectors.t()))
}

/// Canonical correlation alignment into `d_out` dimensions.
///
/// Projected coordinates (of centered inputs) have identity covariance within
/// each set and diagonal cross-covariance holding the canonical correlations.
pub fn cca_align(x1: &Embedding, x2: &Embedding, d_out: usize) -> Result<AlignmentMap> {
    if x1.n() != x2.n() {
        return Err(MmsjError::SizeMismatch(format!("{} vs {} observations", x1.n(), x2.n())));
    }
    let d = x1.dim().min(x2.dim());
    if d_out == 0 || d_out > d {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= d_out <= {d}, got {d_out}")));
    }
    let n = x1.n() as f64;
    let a = centered(&x1.coords);
    let b = centered(&x2.coords);
    let caa = a.t().dot(&a) / n;
    let cbb = b.t().dot(&b) / n;
    let cab = a.t().dot(&b) / n;
    let wa = inverse_sqrt(&caa)?;
    let wb = inverse_sqrt(&cbb)?;
    let k = wa.dot(&cab).dot(&wb);
    let s = svd(k.view())?;
    let u = s.u.slice(ndarray::s![.., ..d_out]).to_owned();
    let v = s.v.slice(ndarray::s![.., ..d_out]).to_owned();
    Ok(AlignmentMap {
        kind: AlignmentKind::Cca,
        transform1: u.t().dot(&wa),
        transform2: v.t().dot(&wb),
        correlations: s.singular_values.iter().take(d_out).map(|c| c.min(1.0)).collect(),
    })
}

fn align(kind: AlignmentKind, x1: &Embedding, x2: &Embedding) -> Result<AlignmentMap> {
    match kind {
        AlignmentKind::Procrustes => procrustes(x1, x2),
        AlignmentKind::Cca => cca_align(x1, x2, x1.dim().min(x2.dim())),
    }
}

/// Pipeline parameters shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub d: usize,
    #[serde(default)]
    pub alignment: AlignmentKind,
    #[serde(default)]
    pub path_algorithm: PathAlgorithm,
}

impl FitConfig {
    pub fn new(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            alignment: AlignmentKind::Procrustes,
            path_algorithm: PathAlgorithm::Dijkstra,
        }
    }
}

/// Per-space state of a fitted MMSJ model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceModel {
    /// Factor applied to raw dissimilarities (`1 / ‖Δ‖_F`).
    pub input_scale: f64,
    /// Factor applied to the shortest-path matrix (`1 / ‖Δ^G‖_F`).
    pub geodesic_scale: f64,
    #[serde(with = "crate::serde_nested::matrix")]
    pub dissimilarities: Matrix,
    /// Shortest-path distances over the joint graph, after `geodesic_scale`.
    #[serde(with = "crate::serde_nested::matrix")]
    pub geodesics: Matrix,
    pub mds: MdsModel,
    pub embedding: Embedding,
}

/// A fitted MMSJ model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsjModel {
    pub version: String,
    pub config: FitConfig,
    #[serde(with = "crate::serde_nested::bool_matrix")]
    pub joint_graph: ndarray::Array2<bool>,
    pub spaces: [SpaceModel; 2],
    pub alignment: AlignmentMap,
}

fn check_pair(d1: &DissimilarityMatrix, d2: &DissimilarityMatrix, cfg: &FitConfig) -> Result<()> {
    if d1.n() != d2.n() {
        return Err(MmsjError::SizeMismatch(format!("{} vs {} training objects", d1.n(), d2.n())));
    }
    let n = d1.n();
    if cfg.k == 0 || cfg.k >= n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= k < n, got k = {}, n = {n}", cfg.k)));
    }
    if cfg.d == 0 || cfg.d >= n {
        return Err(MmsjError::InvalidArgument(format!("need 1 <= d < n, got d = {}, n = {n}", cfg.d)));
    }
    Ok(())
}

/// Fits MMSJ on matched training dissimilarities.
///
/// Both inputs are scaled to unit Frobenius norm, a joint k-NN graph is
/// selected from their sum, shortest paths are computed within each space
/// over that graph, each shortest-path matrix is rescaled to unit Frobenius
/// norm, embedded by classical MDS into `R^d`, and the first embedding is
/// aligned onto the second.
pub fn mmsj_fit(d1: &DissimilarityMatrix, d2: &DissimilarityMatrix, cfg: &FitConfig) -> Result<MmsjModel> {
    check_pair(d1, d2, cfg)?;
    let (s1, f1) = scale_unit_frobenius_with_factor(d1)?;
    let (s2, f2) = scale_unit_frobenius_with_factor(d2)?;
    let graph = joint_knn(&s1, &s2, cfg.k)?;
    let (g1, g2) = rayon::join(
        || all_pairs_shortest_paths(&s1, &graph, cfg.path_algorithm),
        || all_pairs_shortest_paths(&s2, &graph, cfg.path_algorithm),
    );
    let (g1, g2) = (g1?, g2?);
    assert_connected(&g1).map_err(|e| e.with_k(cfg.k))?;
    assert_connected(&g2).map_err(|e| e.with_k(cfg.k))?;

    let build = |scaled: DissimilarityMatrix, input_scale: f64, geo: GeodesicMatrix| -> Result<SpaceModel> {
        let norm = frobenius_norm(geo.values().view());
        if !(norm > 0.0) {
            return Err(MmsjError::DegenerateInput("all shortest-path distances are zero".into()));
        }
        let geodesic_scale = 1.0 / norm;
        let geo = geo.scaled(geodesic_scale);
        let (embedding, mds) = classical_mds(&geo, cfg.d)?;
        Ok(SpaceModel {
            input_scale,
            geodesic_scale,
            dissimilarities: scaled.values().clone(),
            geodesics: geo.into_values(),
            mds,
            embedding,
        })
    };
    let space1 = build(s1, f1, g1)?;
    let space2 = build(s2, f2, g2)?;
    let alignment = align(cfg.alignment, &space1.embedding, &space2.embedding)?;
    Ok(MmsjModel {
        version: MODEL_VERSION.to_string(),
        config: *cfg,
        joint_graph: graph.adjacency().clone(),
        spaces: [space1, space2],
        alignment,
    })
}

impl MmsjModel {
    pub fn n_train(&self) -> usize {
        self.joint_graph.nrows()
    }

    pub fn space(&self, space: Space) -> &SpaceModel {
        &self.spaces[space.index()]
    }

    /// Matched training coordinates `X̂_l`, one row per observation.
    pub fn matched_training(&self, space: Space) -> Matrix {
        self.alignment.apply_rows(space, &self.space(space).embedding.coords)
    }

    /// Maps an unseen observation of `space` from its raw distances to the
    /// training observations of that space.
    ///
    /// The point is attached to its k nearest training points within its own
    /// space (the correspondence of a test point is unknown), its
    /// shortest-path distances run through the training geodesics, and the
    /// result is placed by MDS out-of-sample extension and aligned.
    pub fn map_point(&self, space: Space, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        let sm = self.space(space);
        let scale = sm.input_scale * sm.geodesic_scale;
        let scaled: Vec<f64> = dist_to_train.iter().map(|x| x * scale).collect();
        let gm = GeodesicMatrix::from_parts(sm.geodesics.clone(), self.config.k);
        let geo = geodesics_from_new_point(&gm, &scaled, self.config.k)?;
        let y = mds_out_of_sample(&sm.mds, &geo)?;
        Ok(self.alignment.apply(space, y.view()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MmsjModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(MmsjError::ValidationError(format!(
                "unsupported model version {:?}, expected {MODEL_VERSION:?}",
                model.version
            )));
        }
        let n = model.n_train();
        for sm in &model.spaces {
            if sm.geodesics.dim() != (n, n) || sm.dissimilarities.dim() != (n, n) || sm.mds.n_train() != n {
                return Err(MmsjError::ValidationError("model matrices disagree on the number of training points".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| MmsjError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MmsjError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Maps test observations of one or both spaces through a fitted model.
pub fn mmsj_transform(
    model: &MmsjModel,
    dist_to_train_1: &[f64],
    dist_to_train_2: Option<&[f64]>,
) -> Result<(Array1<f64>, Option<Array1<f64>>)> {
    let y1 = model.map_point(Space::First, dist_to_train_1)?;
    let y2 = dist_to_train_2.map(|d| model.map_point(Space::Second, d)).transpose()?;
    Ok((y1, y2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Mds,
    Isomap,
    Lle,
}

/// One space embedded on its own.
#[derive(Debug, Clone)]
pub enum SeparateEmbedder {
    Mds { input_scale: f64, model: MdsModel },
    Isomap { input_scale: f64, model: Box<IsomapModel> },
    Lle { input_scale: f64, model: LleModel },
}

impl SeparateEmbedder {
    fn fit(method: BaselineMethod, d: &DissimilarityMatrix, cfg: &FitConfig) -> Result<(Self, Embedding)> {
        let (scaled, input_scale) = scale_unit_frobenius_with_factor(d)?;
        Ok(match method {
            BaselineMethod::Mds => {
                let (embedding, model) = classical_mds(&scaled, cfg.d)?;
                (SeparateEmbedder::Mds { input_scale, model }, embedding)
            }
            BaselineMethod::Isomap => {
                let model = isomap_embed(&scaled, cfg.k, cfg.d, cfg.path_algorithm)?;
                let embedding = model.embedding.clone();
                (SeparateEmbedder::Isomap { input_scale, model: Box::new(model) }, embedding)
            }
            BaselineMethod::Lle => {
                let model = lle_embed(LleInput::Distances(&scaled), cfg.k, cfg.d)?;
                let embedding = model.embedding.clone();
                (SeparateEmbedder::Lle { input_scale, model }, embedding)
            }
        })
    }

    fn map(&self, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        let scale = |s: f64| dist_to_train.iter().map(|x| x * s).collect::<Vec<f64>>();
        match self {
            SeparateEmbedder::Mds { input_scale, model } => mds_out_of_sample(model, &scale(*input_scale)),
            SeparateEmbedder::Isomap { input_scale, model } => model.out_of_sample(&scale(*input_scale)),
            SeparateEmbedder::Lle { input_scale, model } => model.out_of_sample(&scale(*input_scale)),
        }
    }
}

/// Separately embedded spaces followed by alignment.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub method: BaselineMethod,
    pub config: FitConfig,
    pub embedders: [SeparateEmbedder; 2],
    pub embeddings: [Embedding; 2],
    pub alignment: AlignmentMap,
}

/// Embeds each space separately with `method` (its own neighborhoods, no
/// shared information) and aligns the two embeddings.
pub fn baseline_fit(
    method: BaselineMethod,
    d1: &DissimilarityMatrix,
    d2: &DissimilarityMatrix,
    cfg: &FitConfig,
) -> Result<BaselineModel> {
    check_pair(d1, d2, cfg)?;
    let (first, second) = rayon::join(
        || SeparateEmbedder::fit(method, d1, cfg),
        || SeparateEmbedder::fit(method, d2, cfg),
    );
    let ((e1, x1), (e2, x2)) = (first?, second?);
    let alignment = align(cfg.alignment, &x1, &x2)?;
    Ok(BaselineModel {
        method,
        config: *cfg,
        embedders: [e1, e2],
        embeddings: [x1, x2],
        alignment,
    })
}

impl BaselineModel {
    pub fn matched_training(&self, space: Space) -> Matrix {
        self.alignment.apply_rows(space, &self.embeddings[space.index()].coords)
    }

    pub fn map_point(&self, space: Space, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        let y = self.embedders[space.index()].map(dist_to_train)?;
        Ok(self.alignment.apply(space, y.view()))
    }
}

/// Every matching method compared in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mmsj,
    Mds,
    Isomap,
    Lle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mmsj => "mmsj",
            Method::Mds => "mds",
            Method::Isomap => "isomap",
            Method::Lle => "lle",
        }
    }

    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::Mmsj => None,
            Method::Mds => Some(BaselineMethod::Mds),
            Method::Isomap => Some(BaselineMethod::Isomap),
            Method::Lle => Some(BaselineMethod::Lle),
        }
    }
}

/// A fitted model of any method.
#[derive(Debug, Clone)]
pub enum Matcher {
    Mmsj(Box<MmsjModel>),
    Baseline(Box<BaselineModel>),
}

impl Matcher {
    pub fn fit(method: Method, d1: &DissimilarityMatrix, d2: &DissimilarityMatrix, cfg: &FitConfig) -> Result<Self> {
        match method.baseline() {
            None => Ok(Matcher::Mmsj(Box::new(mmsj_fit(d1, d2, cfg)?))),
            Some(b) => Ok(Matcher::Baseline(Box::new(baseline_fit(b, d1, d2, cfg)?))),
        }
    }

    pub fn map_point(&self, space: Space, dist_to_train: &[f64]) -> Result<Array1<f64>> {
        match self {
            Matcher::Mmsj(m) => m.map_point(space, dist_to_train),
            Matcher::Baseline(m) => m.map_point(space, dist_to_train),
        }
    }

    pub fn matched_training(&self, space: Space) -> Matrix {
        match self {
            Matcher::Mmsj(m) => m.matched_training(space),
            Matcher::Baseline(m) => m.matched_training(space),
        }
    }

    pub fn alignment(&self) -> &AlignmentMap {
        match self {
            Matcher::Mmsj(m) => &m.alignment,
            Matcher::Baseline(m) => &m.alignment,
        }
    }
}
