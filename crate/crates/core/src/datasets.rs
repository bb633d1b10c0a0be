//! Point clouds, dissimilarity matrices and their file formats.
//!
//! The Swiss roll generator produces a matched pair: the 3D roll and the flat
//! 2D sheet it is rolled from, parameterized by arc length so that the two
//! sets are isometric. Dissimilarity matrices are read from and written to
//! plain CSV grids.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MmsjError, Result};
use crate::linalg::{frobenius_norm, Matrix};

/// Lower end of the Swiss roll angle parameter.
pub const ROLL_T_MIN: f64 = 1.5 * std::f64::consts::PI;
/// Upper end of the Swiss roll angle parameter.
pub const ROLL_T_MAX: f64 = 4.5 * std::f64::consts::PI;
/// Height of the Swiss roll.
pub const ROLL_HEIGHT: f64 = 21.0;

/// Observations from one space, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub coords: Matrix,
    pub label: String,
}

impl PointCloud {
    pub fn new(coords: Matrix, label: impl Into<String>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(MmsjError::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Self {
            coords,
            label: label.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Arc length of the spiral `(t cos t, t sin t)` measured from `t = 0`.
pub fn arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

/// Draws `n` points of the Swiss roll and the matching flat sheet.
///
/// Each point has `t ~ U[3π/2, 9π/2]` and `h ~ U[0, 21]`; the roll point is
/// `(t cos t, h, t sin t)` and its flat counterpart is `(s(t), h)` with `s`
/// the arc length.
pub fn swiss_roll(n: usize, seed: u64) -> Result<(PointCloud, PointCloud)> {
    if n < 2 {
        return Err(MmsjError::InvalidArgument(format!("swiss roll needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roll = Matrix::zeros((n, 3));
    let mut flat = Matrix::zeros((n, 2));
    for i in 0..n {
        let t = rng.random_range(ROLL_T_MIN..ROLL_T_MAX);
        let h = rng.random_range(0.0..ROLL_HEIGHT);
        roll[[i, 0]] = t * t.cos();
        roll[[i, 1]] = h;
        roll[[i, 2]] = t * t.sin();
        flat[[i, 0]] = arc_length(t);
        flat[[i, 1]] = h;
    }
    Ok((
        PointCloud::new(roll, "swiss-roll-3d")?,
        PointCloud::new(flat, "swiss-roll-flat-2d")?,
    ))
}

/// Adds i.i.d. `N(0, eps)` noise to every coordinate; `eps` is a variance.
pub fn add_gaussian_noise(pc: &PointCloud, eps: f64, seed: u64) -> Result<PointCloud> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(MmsjError::InvalidArgument(format!("noise variance must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(pc.clone());
    }
    let normal = Normal::new(0.0, eps.sqrt()).map_err(|e| MmsjError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = pc.coords.mapv(|x| x + normal.sample(&mut rng));
    PointCloud::new(coords, pc.label.clone())
}

/// Symmetric, nonnegative, zero-diagonal dissimilarities between `n` objects.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    values: Matrix,
    scaled: bool,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl DissimilarityMatrix {
    /// Validates an exact dissimilarity matrix: square, finite, nonnegative,
    /// symmetric and zero on the diagonal (relative tolerance 1e-10).
    pub fn new(values: Matrix) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(MmsjError::ValidationError(format!(
                "dissimilarity matrix must be square, got {rows}x{cols}"
            )));
        }
        let scale = values.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        let tol = SYMMETRY_TOL * scale;
        for ((i, j), &x) in values.indexed_iter() {
            if !x.is_finite() {
                return Err(MmsjError::ValidationError(format!("entry ({i},{j}) is not finite")));
            }
            if x < 0.0 {
                return Err(MmsjError::ValidationError(format!("entry ({i},{j}) = {x} is negative")));
            }
            if i == j && x > tol {
                return Err(MmsjError::ValidationError(format!("diagonal entry ({i},{i}) = {x} is not zero")));
            }
            if j > i && (x - values[[j, i]]).abs() > tol {
                return Err(MmsjError::ValidationError(format!("entries ({i},{j}) and ({j},{i}) differ")));
            }
        }
        let mut values = values;
        for i in 0..rows {
            values[[i, i]] = 0.0;
        }
        Ok(Self { values, scaled: false })
    }

    /// Validates a grid read from an external source.
    ///
    /// Asymmetry up to `1e-3 · ‖values‖_F` is averaged away and a nonzero
    /// diagonal is forced to zero with a warning.
    pub fn from_grid(grid: ArrayView2<f64>) -> Result<Self> {
        let (rows, cols) = grid.dim();
        if rows != cols {
            return Err(MmsjError::ValidationError(format!(
                "dissimilarity matrix must be square, got {rows}x{cols}"
            )));
        }
        for ((i, j), &x) in grid.indexed_iter() {
            if !x.is_finite() {
                return Err(MmsjError::ValidationError(format!("entry ({i},{j}) is not finite")));
            }
            if x < 0.0 {
                return Err(MmsjError::ValidationError(format!("entry ({i},{j}) = {x} is negative")));
            }
        }
        let norm = frobenius_norm(grid);
        let asymmetry = frobenius_norm((&grid - &grid.t()).view());
        if asymmetry > 1e-3 * norm {
            return Err(MmsjError::ValidationError(format!(
                "asymmetry {asymmetry:.3e} exceeds 1e-3 of the Frobenius norm {norm:.3e}"
            )));
        }
        let mut values = crate::linalg::symmetrize(grid);
        let max_diag = (0..rows).map(|i| values[[i, i]].abs()).fold(0.0, f64::max);
        if max_diag > 1e-8 {
            log::warn!("forcing nonzero diagonal (max |d_ii| = {max_diag:.3e}) to zero");
        }
        for i in 0..rows {
            values[[i, i]] = 0.0;
        }
        Ok(Self { values, scaled: false })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self.values.view())
    }

    /// The dissimilarities among `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let values = Array2::from_shape_fn((indices.len(), indices.len()), |(a, b)| {
            self.values[[indices[a], indices[b]]]
        });
        Self { values, scaled: false }
    }

    /// Dissimilarities from object `row` to each of `columns`.
    pub fn row_to(&self, row: usize, columns: &[usize]) -> Vec<f64> {
        columns.iter().map(|&c| self.values[[row, c]]).collect()
    }

    /// Marks a matrix as unit-Frobenius scaled without touching its values.
    /// Used by tests that need to bypass the scaling precondition.
    #[doc(hidden)]
    pub fn assume_scaled(mut self) -> Self {
        self.scaled = true;
        self
    }
}

/// Pairwise straight-line distances between the rows of `pc`.
pub fn euclidean_distances(pc: &PointCloud) -> DissimilarityMatrix {
    let n = pc.n();
    let mut values = Matrix::zeros((n, n));
    for i in 0..n {
        let xi = pc.coords.row(i);
        for j in (i + 1)..n {
            let xj = pc.coords.row(j);
            let d = xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    DissimilarityMatrix { values, scaled: false }
}

/// Divides by the Frobenius norm. Returns the scaled matrix and the factor
/// `1 / ‖d‖_F` that was applied.
pub fn scale_unit_frobenius_with_factor(d: &DissimilarityMatrix) -> Result<(DissimilarityMatrix, f64)> {
    let norm = d.frobenius_norm();
    if !(norm > 0.0) {
        return Err(MmsjError::DegenerateInput("cannot scale an all-zero dissimilarity matrix".into()));
    }
    let factor = 1.0 / norm;
    Ok((
        DissimilarityMatrix {
            values: d.values.mapv(|x| x * factor),
            scaled: true,
        },
        factor,
    ))
}

pub fn scale_unit_frobenius(d: &DissimilarityMatrix) -> Result<DissimilarityMatrix> {
    scale_unit_frobenius_with_factor(d).map(|(m, _)| m)
}

/// Replaces every entry above `cutoff` (including `+Inf`) with `fill`, then
/// validates the result as a dissimilarity matrix.
pub fn impute_graph_distances(grid: ArrayView2<f64>, cutoff: f64, fill: f64) -> Result<DissimilarityMatrix> {
    if !(cutoff > 0.0) {
        return Err(MmsjError::InvalidArgument(format!("cutoff must be > 0, got {cutoff}")));
    }
    if !(fill >= cutoff) || !fill.is_finite() {
        return Err(MmsjError::InvalidArgument(format!(
            "fill ({fill}) must be finite and >= cutoff ({cutoff})"
        )));
    }
    let imputed = grid.mapv(|x| if x > cutoff { fill } else { x });
    DissimilarityMatrix::from_grid(imputed.view())
}

fn parse_numeric_row(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record.iter().map(|field| field.trim().parse::<f64>().ok()).collect()
}

/// Reads a CSV grid of numbers. A non-numeric first row is taken as a
/// header and skipped. Entries may be `inf`.
pub fn read_numeric_csv(path: &Path) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| MmsjError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| MmsjError::ParseError(format!("{}: {e}", path.display())))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match parse_numeric_row(&record) {
            Some(row) => rows.push(row),
            None if line == 0 => continue,
            None => {
                return Err(MmsjError::ParseError(format!(
                    "{}: non-numeric value on line {}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(MmsjError::ParseError(format!(
            "{}: row {} has {} values, expected {cols}",
            path.display(),
            i + 1,
            row.len()
        )));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| MmsjError::ParseError(e.to_string()))
}

/// Reads a square dissimilarity grid (entries may be `inf`).
pub fn read_dissimilarity_grid(path: &Path) -> Result<Matrix> {
    let grid = read_numeric_csv(path)?;
    if grid.nrows() != grid.ncols() || grid.nrows() == 0 {
        return Err(MmsjError::ParseError(format!(
            "{}: expected an n x n grid, got {}x{}",
            path.display(),
            grid.nrows(),
            grid.ncols()
        )));
    }
    Ok(grid)
}

/// Loads and validates a CSV dissimilarity matrix.
pub fn load_dissimilarity(path: &Path) -> Result<DissimilarityMatrix> {
    DissimilarityMatrix::from_grid(read_dissimilarity_grid(path)?.view())
}

fn write_grid(path: &Path, m: ArrayView2<f64>, header: Option<&[&str]>) -> Result<()> {
    let file = File::create(path).map_err(|e| MmsjError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        if let Some(names) = header {
            writeln!(out, "{}", names.join(","))?;
        }
        for row in m.axis_iter(Axis(0)) {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| MmsjError::io(path, e))
}

/// Writes the matrix as CSV using shortest round-trip decimal formatting.
pub fn save_dissimilarity(d: &DissimilarityMatrix, path: &Path) -> Result<()> {
    write_grid(path, d.values.view(), None)
}

/// Writes a point cloud as CSV with a header row of column names.
pub fn save_points(pc: &PointCloud, path: &Path, columns: &[&str]) -> Result<()> {
    if columns.len() != pc.dim() {
        return Err(MmsjError::SizeMismatch(format!(
            "{} column names for {} coordinates",
            columns.len(),
            pc.dim()
        )));
    }
    write_grid(path, pc.coords.view(), Some(columns))
}

pub fn load_points(path: &Path, label: &str) -> Result<PointCloud> {
    PointCloud::new(read_numeric_csv(path)?, label)
}
