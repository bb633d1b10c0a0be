//! Matching criteria and the Monte-Carlo experiment harness.
//!
//! Every replicate draws its data (for generated datasets) and its
//! train / matched-test / unmatched-test split from streams derived from the
//! master seed and the replicate index, so reports are reproducible and grid
//! cells of a parameter sweep share their splits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{
    add_gaussian_noise, euclidean_distances, impute_graph_distances, load_dissimilarity, load_points,
    read_dissimilarity_grid, swiss_roll, DissimilarityMatrix, PointCloud,
};
use crate::embedding::{lle_embed, LleInput};
use crate::error::{MmsjError, Result};
use crate::matching::{AlignmentKind, FitConfig, Matcher, Method, Space};
use crate::paths::PathAlgorithm;

/// Fraction of matched pairs whose second-space image is the unique nearest
/// neighbor of the first-space image among all second-space images.
pub fn matching_ratio(mapped1: &Array2<f64>, mapped2: &Array2<f64>) -> Result<f64> {
    if mapped1.dim() != mapped2.dim() {
        return Err(MmsjError::SizeMismatch(format!("{:?} vs {:?}", mapped1.dim(), mapped2.dim())));
    }
    let m = mapped1.nrows();
    if m == 0 {
        return Err(MmsjError::InvalidArgument("matching ratio needs at least one pair".into()));
    }
    let sq = |i: usize, j: usize| -> f64 {
        mapped1.row(i).iter().zip(mapped2.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let correct = (0..m)
        .filter(|&i| {
            let own = sq(i, i);
            (0..m).all(|j| j == i || sq(i, j) > own)
        })
        .count();
    Ok(correct as f64 / m as f64)
}

/// Empirical `alpha`-quantile (order statistic `⌈alpha·m⌉`) of a sample.
pub fn lower_quantile(sample: &[f64], alpha: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // The small offset keeps products such as 0.07 * 100 from rounding up.
    let rank = ((alpha * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}

/// Fraction of matched distances at or below the `alpha` critical value of
/// the unmatched distances.
pub fn testing_power(matched: &[f64], unmatched: &[f64], alpha: f64) -> Result<f64> {
    if matched.is_empty() || unmatched.is_empty() {
        return Err(MmsjError::InvalidArgument("testing power needs nonempty samples".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MmsjError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let threshold = lower_quantile(unmatched, alpha);
    Ok(matched.iter().filter(|&&d| d <= threshold).count() as f64 / matched.len() as f64)
}

/// Power at each level of `alphas`.
pub fn power_curve(matched: &[f64], unmatched: &[f64], alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas.iter().map(|&a| Ok((a, testing_power(matched, unmatched, a)?))).collect()
}

/// Levels 0.01, 0.02, ..., 0.99.
pub fn default_alphas() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub n_train: usize,
    pub n_matched_test: usize,
    pub n_unmatched_test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.n_train + self.n_matched_test + self.n_unmatched_test
    }
}

/// Disjoint index roles for one replicate.
///
/// Unmatched pair `i` joins first-space observation `unmatched_test[i]`
/// with second-space observation `unmatched_test[unmatched_partner[i]]`;
/// `unmatched_partner` is a derangement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub matched_test: Vec<usize>,
    pub unmatched_test: Vec<usize>,
    pub unmatched_partner: Vec<usize>,
}

fn derangement(m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

impl SplitPlan {
    pub fn draw(n_total: usize, sizes: SplitSizes, seed: u64) -> Result<Self> {
        if sizes.total() > n_total {
            return Err(MmsjError::InvalidArgument(format!(
                "split needs {} observations, dataset has {n_total}",
                sizes.total()
            )));
        }
        if sizes.n_unmatched_test == 1 {
            return Err(MmsjError::InvalidArgument("unmatched pairs need at least two observations".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n_total).collect();
        order.shuffle(&mut rng);
        let (train, rest) = order.split_at(sizes.n_train);
        let (matched, rest) = rest.split_at(sizes.n_matched_test);
        let unmatched = &rest[..sizes.n_unmatched_test];
        let partner = derangement(sizes.n_unmatched_test, &mut rng);
        Ok(Self {
            seed,
            train: train.to_vec(),
            matched_test: matched.to_vec(),
            unmatched_test: unmatched.to_vec(),
            unmatched_partner: partner,
        })
    }

    /// Short stable hash of the index lists.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, list) in [
            (b'T', &self.train),
            (b'M', &self.matched_test),
            (b'U', &self.unmatched_test),
            (b'P', &self.unmatched_partner),
        ] {
            hasher.update([tag]);
            for &i in list.iter() {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hasher.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// What the first Swiss-roll space holds; the second is always the flat sheet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "view")]
pub enum RollView {
    /// The 3D roll.
    #[default]
    Roll3d,
    /// A 2D LLE embedding of the 3D roll.
    LleEmbedding {
        #[serde(default = "default_lle_k")]
        k: usize,
    },
    /// The flat sheet itself (identical spaces).
    Flat,
}

fn default_lle_k() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub cutoff: f64,
    pub fill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    /// Freshly generated Swiss roll pair per replicate; `noise_variance` is
    /// added to the flat sheet before its distances are computed.
    SwissRoll {
        #[serde(default)]
        noise_variance: f64,
        #[serde(default)]
        first: RollView,
    },
    /// Two matched CSV dissimilarity matrices.
    DissimilarityFiles {
        first: PathBuf,
        second: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        impute: Option<Imputation>,
    },
    /// Two matched CSV point clouds (Euclidean distances).
    PointFiles { first: PathBuf, second: PathBuf },
    /// A manifest written by `gen-swiss`.
    Manifest { path: PathBuf },
}

/// Written next to generated point files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwissManifest {
    pub generator: String,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_variance: f64,
    pub first: PathBuf,
    pub second: PathBuf,
}

impl SwissManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MmsjError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn default_alpha() -> f64 {
    0.05
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub method: Method,
    pub k: usize,
    pub d: usize,
    #[serde(default)]
    pub alignment: AlignmentKind,
    #[serde(default)]
    pub path_algorithm: PathAlgorithm,
    pub split: SplitSizes,
    pub replicates: usize,
    pub seed: u64,
    /// Level of the headline power figure.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Levels of the reported power curve; defaults to 0.01..0.99.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.k,
            d: self.d,
            alignment: self.alignment,
            path_algorithm: self.path_algorithm,
        }
    }

    pub fn curve_alphas(&self) -> Vec<f64> {
        let mut alphas = self.alphas.clone().unwrap_or_else(default_alphas);
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        alphas
    }

    /// Every problem with the configuration, or `Ok` if there are none.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let s = &self.split;
        if s.n_train < 2 {
            problems.push(format!("split.n_train must be >= 2, got {}", s.n_train));
        }
        if s.n_matched_test == 0 {
            problems.push("split.n_matched_test must be positive".to_string());
        }
        if s.n_unmatched_test < 2 {
            problems.push(format!("split.n_unmatched_test must be >= 2, got {}", s.n_unmatched_test));
        }
        if self.replicates == 0 {
            problems.push("replicates must be positive".to_string());
        }
        if self.k == 0 || self.k >= s.n_train {
            problems.push(format!("k must satisfy 1 <= k < n_train, got k = {}", self.k));
        }
        if self.d == 0 || self.d >= s.n_train {
            problems.push(format!("d must satisfy 1 <= d < n_train, got d = {}", self.d));
        }
        if self.method == Method::Lle && self.d >= self.k {
            problems.push(format!("lle needs d < k, got d = {}, k = {}", self.d, self.k));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            problems.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(alphas) = &self.alphas {
            if alphas.is_empty() {
                problems.push("alphas must not be empty".to_string());
            }
            if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                problems.push("every entry of alphas must lie in (0, 1)".to_string());
            }
        }
        match &self.dataset {
            DatasetSpec::SwissRoll { noise_variance, first } => {
                if !(*noise_variance >= 0.0) {
                    problems.push(format!("noise_variance must be >= 0, got {noise_variance}"));
                }
                if let RollView::LleEmbedding { k } = first {
                    if *k <= 2 || *k >= s.total() {
                        problems.push(format!("LLE view needs 2 < k < n, got k = {k}"));
                    }
                }
            }
            DatasetSpec::DissimilarityFiles { first, second, impute } => {
                for p in [first, second] {
                    if !p.is_file() {
                        problems.push(format!("dissimilarity file {} does not exist", p.display()));
                    }
                }
                if let Some(imp) = impute {
                    if !(imp.cutoff > 0.0) || !(imp.fill >= imp.cutoff) {
                        problems.push(format!("impute needs cutoff > 0 and fill >= cutoff, got {imp:?}"));
                    }
                }
            }
            DatasetSpec::PointFiles { first, second } => {
                for p in [first, second] {
                    if !p.is_file() {
                        problems.push(format!("point file {} does not exist", p.display()));
                    }
                }
            }
            DatasetSpec::Manifest { path } => {
                if !path.is_file() {
                    problems.push(format!("manifest {} does not exist", path.display()));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Resolved data for an experiment.
#[derive(Debug, Clone)]
pub enum DataSource {
    SwissRoll { noise_variance: f64, first: RollView },
    Fixed { first: DissimilarityMatrix, second: DissimilarityMatrix },
}

impl DataSource {
    /// Loads file-backed data once.
    pub fn prepare(spec: &DatasetSpec) -> Result<Self> {
        match spec {
            DatasetSpec::SwissRoll { noise_variance, first } => Ok(DataSource::SwissRoll {
                noise_variance: *noise_variance,
                first: *first,
            }),
            DatasetSpec::DissimilarityFiles { first, second, impute } => {
                let load = |p: &Path| -> Result<DissimilarityMatrix> {
                    match impute {
                        Some(imp) => impute_graph_distances(read_dissimilarity_grid(p)?.view(), imp.cutoff, imp.fill),
                        None => load_dissimilarity(p),
                    }
                };
                Self::fixed(load(first)?, load(second)?)
            }
            DatasetSpec::PointFiles { first, second } => Self::from_points(first, second),
            DatasetSpec::Manifest { path } => {
                let manifest = SwissManifest::load(path)?;
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                Self::from_points(&base.join(&manifest.first), &base.join(&manifest.second))
            }
        }
    }

    fn from_points(first: &Path, second: &Path) -> Result<Self> {
        let a = load_points(first, "first")?;
        let b = load_points(second, "second")?;
        Self::fixed(euclidean_distances(&a), euclidean_distances(&b))
    }

    fn fixed(first: DissimilarityMatrix, second: DissimilarityMatrix) -> Result<Self> {
        if first.n() != second.n() {
            return Err(MmsjError::SizeMismatch(format!("{} vs {} observations", first.n(), second.n())));
        }
        Ok(DataSource::Fixed { first, second })
    }

    /// The full matched pair for one replicate.
    pub fn realize(&self, n_total: usize, seeds: &ReplicateSeeds) -> Result<(DissimilarityMatrix, DissimilarityMatrix)> {
        match self {
            DataSource::Fixed { first, second } => Ok((first.clone(), second.clone())),
            DataSource::SwissRoll { noise_variance, first } => {
                let (roll, flat) = swiss_roll(n_total, seeds.data)?;
                let flat = add_gaussian_noise(&flat, *noise_variance, seeds.noise)?;
                let first_space = match first {
                    RollView::Roll3d => roll,
                    RollView::Flat => flat.clone(),
                    RollView::LleEmbedding { k } => {
                        let model = lle_embed(LleInput::Points(&roll), *k, 2)?;
                        PointCloud::new(model.embedding.coords, "swiss-roll-lle-2d")?
                    }
                };
                Ok((euclidean_distances(&first_space), euclidean_distances(&flat)))
            }
        }
    }

    pub fn n_available(&self) -> Option<usize> {
        match self {
            DataSource::Fixed { first, .. } => Some(first.n()),
            DataSource::SwissRoll { .. } => None,
        }
    }
}

/// Seeds for one replicate, derived from the master seed and the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateSeeds {
    pub data: u64,
    pub noise: u64,
    pub split: u64,
}

impl ReplicateSeeds {
    pub fn derive(master: u64, replicate: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(replicate as u64);
        Self {
            data: rng.next_u64(),
            noise: rng.next_u64(),
            split: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let r = values.len();
        if r == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let stderr = if r > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
            (var / r as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, stderr })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ReplicateOutcome {
    Completed {
        matching_ratio: f64,
        power_at_alpha: f64,
        /// Power at each level of the report's curve.
        power: Vec<f64>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub split_digest: String,
    #[serde(flatten)]
    pub outcome: ReplicateOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub completed: usize,
    pub skipped: usize,
    pub matching_ratio: Option<Summary>,
    pub power_at_alpha: Option<Summary>,
    pub power_curve: Vec<CurvePoint>,
    pub replicates: Vec<ReplicateRecord>,
}

impl EvalReport {
    pub fn mean_ratio(&self) -> Option<f64> {
        self.matching_ratio.map(|s| s.mean)
    }

    pub fn mean_power(&self) -> Option<f64> {
        self.power_at_alpha.map(|s| s.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `alpha,method,mean,stderr,replicates` rows.
    pub fn power_curve_csv(&self) -> String {
        let mut out = String::from("alpha,method,mean,stderr,replicates\n");
        for p in &self.power_curve {
            let _ = writeln!(out, "{},{},{},{},{}", p.alpha, self.config.method.name(), p.mean, p.stderr, self.completed);
        }
        out
    }

    /// One line per skipped replicate plus a summary line.
    pub fn run_log(&self) -> String {
        let mut out = String::new();
        for r in &self.replicates {
            if let ReplicateOutcome::Skipped { reason } = &r.outcome {
                let _ = writeln!(out, "replicate {} skipped: {reason}", r.index);
            }
        }
        let _ = writeln!(
            out,
            "{} replicates completed, {} skipped",
            self.completed, self.skipped
        );
        out
    }
}

/// Matched and unmatched test distances plus the matching ratio for one
/// fitted model.
#[derive(Debug, Clone)]
pub struct TestDistances {
    pub matched: Vec<f64>,
    pub unmatched: Vec<f64>,
    pub matching_ratio: f64,
}

fn map_rows(model: &Matcher, space: Space, d: &DissimilarityMatrix, rows: &[usize], train: &[usize]) -> Result<Array2<f64>> {
    let mapped: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| model.map_point(space, &d.row_to(r, train)).map(|y| y.to_vec()))
        .collect::<Result<_>>()?;
    let dim = mapped.first().map_or(0, Vec::len);
    Ok(Array2::from_shape_vec((rows.len(), dim), mapped.into_iter().flatten().collect()).expect("uniform rows"))
}

fn row_distance(a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize) -> f64 {
    a.row(i).iter().zip(b.row(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fits on the training roles of `plan` and measures the test roles.
pub fn evaluate_split(
    method: Method,
    cfg: &FitConfig,
    d1: &DissimilarityMatrix,
    d2: &DissimilarityMatrix,
    plan: &SplitPlan,
) -> Result<TestDistances> {
    let train1 = d1.submatrix(&plan.train);
    let train2 = d2.submatrix(&plan.train);
    let model = Matcher::fit(method, &train1, &train2, cfg)?;
    let m1 = map_rows(&model, Space::First, d1, &plan.matched_test, &plan.train)?;
    let m2 = map_rows(&model, Space::Second, d2, &plan.matched_test, &plan.train)?;
    let u1 = map_rows(&model, Space::First, d1, &plan.unmatched_test, &plan.train)?;
    let u2 = map_rows(&model, Space::Second, d2, &plan.unmatched_test, &plan.train)?;
    let matched = (0..m1.nrows()).map(|i| row_distance(&m1, i, &m2, i)).collect();
    let unmatched = plan
        .unmatched_partner
        .iter()
        .enumerate()
        .map(|(i, &p)| row_distance(&u1, i, &u2, p))
        .collect();
    Ok(TestDistances {
        matched,
        unmatched,
        matching_ratio: matching_ratio(&m1, &m2)?,
    })
}

fn run_replicate(config: &ExperimentConfig, source: &DataSource, alphas: &[f64], index: usize) -> ReplicateRecord {
    let seeds = ReplicateSeeds::derive(config.seed, index);
    let n_total = source.n_available().unwrap_or_else(|| config.split.total());
    let plan = match SplitPlan::draw(n_total, config.split, seeds.split) {
        Ok(p) => p,
        Err(e) => {
            return ReplicateRecord {
                index,
                split_digest: String::new(),
                outcome: ReplicateOutcome::Skipped { reason: e.to_string() },
            }
        }
    };
    let split_digest = plan.digest();
    let outcome = (|| -> Result<ReplicateOutcome> {
        let (d1, d2) = source.realize(n_total, &seeds)?;
        let t = evaluate_split(config.method, &config.fit_config(), &d1, &d2, &plan)?;
        Ok(ReplicateOutcome::Completed {
            matching_ratio: t.matching_ratio,
            power_at_alpha: testing_power(&t.matched, &t.unmatched, config.alpha)?,
            power: power_curve(&t.matched, &t.unmatched, alphas)?.into_iter().map(|(_, p)| p).collect(),
        })
    })()
    .unwrap_or_else(|e| {
        log::info!("replicate {index} skipped: {e}");
        ReplicateOutcome::Skipped { reason: e.to_string() }
    });
    ReplicateRecord {
        index,
        split_digest,
        outcome,
    }
}

/// Runs every replicate of `config` against an already prepared data source.
pub fn run_with_source(config: &ExperimentConfig, source: &DataSource) -> Result<EvalReport> {
    config
        .validate()
        .map_err(|problems| MmsjError::ValidationError(problems.join("; ")))?;
    let alphas = config.curve_alphas();
    let replicates: Vec<ReplicateRecord> = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(config, source, &alphas, i))
        .collect();

    let mut ratios = Vec::new();
    let mut powers = Vec::new();
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); alphas.len()];
    for r in &replicates {
        if let ReplicateOutcome::Completed { matching_ratio, power_at_alpha, power } = &r.outcome {
            ratios.push(*matching_ratio);
            powers.push(*power_at_alpha);
            for (c, p) in curves.iter_mut().zip(power) {
                c.push(*p);
            }
        }
    }
    let power_curve = if ratios.is_empty() {
        Vec::new()
    } else {
        alphas
            .iter()
            .zip(&curves)
            .map(|(&alpha, values)| {
                let s = Summary::of(values).expect("nonempty");
                CurvePoint { alpha, mean: s.mean, stderr: s.stderr }
            })
            .collect()
    };
    Ok(EvalReport {
        config: config.clone(),
        completed: ratios.len(),
        skipped: replicates.len() - ratios.len(),
        matching_ratio: Summary::of(&ratios),
        power_at_alpha: Summary::of(&powers),
        power_curve,
        replicates,
    })
}

/// Prepares the dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    config
        .validate()
        .map_err(|problems| MmsjError::ValidationError(problems.join("; ")))?;
    let source = DataSource::prepare(&config.dataset)?;
    run_with_source(config, &source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub d: usize,
    pub completed: usize,
    pub skipped: usize,
    pub matching_ratio: Option<Summary>,
    pub power_at_alpha: Option<Summary>,
    /// Split digest per replicate; identical across cells.
    pub split_digests: Vec<String>,
    /// Set when the whole cell was rejected (for example `d >= k` for LLE).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub k_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// `k,d,method,mean,stderr,replicates` rows of power at the config's alpha.
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("k,d,method,mean,stderr,replicates\n");
        for c in &self.cells {
            let (mean, stderr) = c
                .power_at_alpha
                .map_or((String::from("NaN"), String::from("NaN")), |s| (s.mean.to_string(), s.stderr.to_string()));
            let _ = writeln!(out, "{},{},{},{mean},{stderr},{}", c.k, c.d, self.config.method.name(), c.completed);
        }
        out
    }

    pub fn cell(&self, k: usize, d: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.k == k && c.d == d)
    }

    /// Largest minus smallest mean power over completed cells.
    pub fn power_spread(&self) -> Option<f64> {
        let means: Vec<f64> = self.cells.iter().filter_map(|c| c.power_at_alpha.map(|s| s.mean)).collect();
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        (!means.is_empty()).then_some(max - min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs `config` for every `(k, d)` pair with shared replicate seeds.
pub fn parameter_sweep(config: &ExperimentConfig, k_values: &[usize], d_values: &[usize]) -> Result<SweepReport> {
    if k_values.is_empty() || d_values.is_empty() {
        return Err(MmsjError::InvalidArgument("sweep ranges must be nonempty".into()));
    }
    let source = DataSource::prepare(&config.dataset)?;
    let grid: Vec<(usize, usize)> = k_values.iter().flat_map(|&k| d_values.iter().map(move |&d| (k, d))).collect();
    let cells = grid
        .par_iter()
        .map(|&(k, d)| {
            let cell_config = ExperimentConfig { k, d, ..config.clone() };
            match run_with_source(&cell_config, &source) {
                Ok(report) => SweepCell {
                    k,
                    d,
                    completed: report.completed,
                    skipped: report.skipped,
                    matching_ratio: report.matching_ratio,
                    power_at_alpha: report.power_at_alpha,
                    split_digests: report.replicates.iter().map(|r| r.split_digest.clone()).collect(),
                    error: None,
                },
                Err(e) => SweepCell {
                    k,
                    d,
                    completed: 0,
                    skipped: config.replicates,
                    matching_ratio: None,
                    power_at_alpha: None,
                    split_digests: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepReport {
        config: config.clone(),
        k_values: k_values.to_vec(),
        d_values: d_values.to_vec(),
        cells,
    })
}
