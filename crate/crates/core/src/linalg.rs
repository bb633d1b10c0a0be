//! Dense linear algebra: symmetric eigendecomposition and SVD.
//!
//! Factorizations run on `faer`, single-threaded so results do not depend on
//! the thread count. Outputs are `ndarray` matrices with a deterministic sign
//! convention: every eigenvector (and every left singular vector) has its
//! largest-magnitude component positive, ties resolved by the lowest index.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{MmsjError, Result};

/// Real matrix in row-major order.
pub type Matrix = Array2<f64>;

/// Eigenpairs of a symmetric matrix. `vectors` holds one eigenvector per column.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Array1<f64>,
    pub vectors: Matrix,
}

/// Thin singular value decomposition `m = u · diag(singular_values) · vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Array1<f64>,
    pub v: Matrix,
}

pub fn frobenius_norm(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest absolute entry of `mᵀm − I`.
pub fn orthonormality_error(m: ArrayView2<f64>) -> f64 {
    let gram = m.t().dot(&m);
    gram.indexed_iter()
        .map(|((i, j), &g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: ArrayView2<f64>) -> Matrix {
    let mut out = m.to_owned();
    let n = out.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            out[[i, j]] = avg;
            out[[j, i]] = avg;
        }
    }
    out
}

fn check_finite(m: ArrayView2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MmsjError::InvalidMatrix(format!("{what}: non-finite entry")))
    }
}

fn check_square(m: ArrayView2<f64>, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(MmsjError::InvalidMatrix(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Flip column signs so the largest-magnitude entry of each column is
/// positive. Returns the applied signs.
fn canonicalize_column_signs(m: &mut Matrix) -> Vec<f64> {
    let mut signs = Vec::with_capacity(m.ncols());
    for mut col in m.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        let sign = if best_abs > 0.0 && col[best] < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        signs.push(sign);
    }
    signs
}

fn to_faer(m: ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_faer(m: MatRef<'_, f64>) -> Matrix {
    Matrix::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// All eigenpairs of the symmetrized input, eigenvalues ascending.
fn eig_ascending(m: ArrayView2<f64>, what: &str) -> Result<SymEig> {
    check_square(m, what)?;
    check_finite(m, what)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: Array1::zeros(0),
            vectors: Matrix::zeros((0, 0)),
        });
    }
    let evd = to_faer(symmetrize(m).view())
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| MmsjError::Numerical(format!("{what}: eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    Ok(SymEig {
        values: Array1::from_shape_fn(n, |i| s[i]),
        vectors: from_faer(evd.U()),
    })
}

fn select_columns(eig: &SymEig, order: impl Iterator<Item = usize>) -> SymEig {
    let idx: Vec<usize> = order.collect();
    let values = Array1::from_iter(idx.iter().map(|&j| eig.values[j]));
    let vectors = eig.vectors.select(Axis(1), &idx).as_standard_layout().into_owned();
    let mut out = SymEig { values, vectors };
    canonicalize_column_signs(&mut out.vectors);
    out
}

fn check_count(m: ArrayView2<f64>, count: usize, what: &str) -> Result<()> {
    check_square(m, what)?;
    let n = m.nrows();
    if count == 0 || count > n {
        return Err(MmsjError::InvalidArgument(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
///
/// The input is symmetrized by `(m + mᵀ)/2` before factorization.
pub fn sym_eig(m: ArrayView2<f64>) -> Result<SymEig> {
    let eig = eig_ascending(m, "sym_eig")?;
    let n = eig.values.len();
    Ok(select_columns(&eig, (0..n).rev()))
}

/// The `count` largest eigenpairs, eigenvalues descending.
pub fn sym_eig_largest(m: ArrayView2<f64>, count: usize) -> Result<SymEig> {
    check_count(m, count, "sym_eig_largest")?;
    let eig = eig_ascending(m, "sym_eig_largest")?;
    let n = eig.values.len();
    Ok(select_columns(&eig, (n - count..n).rev()))
}

/// The `count` smallest eigenpairs, eigenvalues ascending.
pub fn sym_eig_smallest(m: ArrayView2<f64>, count: usize) -> Result<SymEig> {
    check_count(m, count, "sym_eig_smallest")?;
    let eig = eig_ascending(m, "sym_eig_smallest")?;
    Ok(select_columns(&eig, 0..count))
}

/// Thin SVD, singular values descending.
pub fn svd(m: ArrayView2<f64>) -> Result<Svd> {
    check_finite(m, "svd")?;
    let (rows, cols) = m.dim();
    let p = rows.min(cols);
    if p == 0 {
        return Ok(Svd {
            u: Matrix::zeros((rows, 0)),
            singular_values: Array1::zeros(0),
            v: Matrix::zeros((cols, 0)),
        });
    }
    let dec = to_faer(m)
        .thin_svd()
        .map_err(|e| MmsjError::Numerical(format!("svd failed to converge: {e:?}")))?;
    let s = dec.S().column_vector();
    let mut u = from_faer(dec.U());
    let mut v = from_faer(dec.V());
    let signs = canonicalize_column_signs(&mut u);
    for (mut col, sign) in v.columns_mut().into_iter().zip(signs) {
        if sign < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(Svd {
        u,
        singular_values: Array1::from_shape_fn(p, |i| s[i]),
        v,
    })
}

/// Solves `a · x = b` for symmetric positive definite `a` by Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: &[f64]) -> Result<Array1<f64>> {
    check_square(a, "solve_spd")?;
    check_finite(a, "solve_spd")?;
    let n = a.nrows();
    if b.len() != n {
        return Err(MmsjError::SizeMismatch(format!("{n}x{n} system with {} right-hand entries", b.len())));
    }
    if n == 0 {
        return Ok(Array1::zeros(0));
    }
    let llt = to_faer(symmetrize(a).view())
        .llt(Side::Lower)
        .map_err(|e| MmsjError::Numerical(format!("Cholesky failed (matrix not positive definite): {e:?}")))?;
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    Ok(Array1::from_shape_fn(n, |i| x[(i, 0)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn reconstruct_eig(e: &SymEig) -> Matrix {
        let scaled = &e.vectors * &e.values;
        scaled.dot(&e.vectors.t())
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eig(Matrix::eye(2).view()).unwrap();
        assert_eq!(e.values.len(), 2);
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(orthonormality_error(e.vectors.view()) < 1e-12);
    }

    #[test]
    fn diagonal_eigenpairs() {
        let e = sym_eig(array![[2.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        assert!((e.vectors[[0, 0]] - 1.0).abs() < 1e-14);
        assert!((e.vectors[[1, 1]] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstruction() {
        let a = random_matrix(5, 5, 7);
        let m = &a + &a.t();
        let e = sym_eig(m.view()).unwrap();
        let err = frobenius_norm((reconstruct_eig(&e) - &m).view());
        assert!(err <= 1e-8 * frobenius_norm(m.view()));
        assert!(orthonormality_error(e.vectors.view()) <= 1e-8);
        assert!(e.values.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn partial_spectra_match_full() {
        let a = random_matrix(30, 30, 11);
        let m = a.t().dot(&a);
        let full = sym_eig(m.view()).unwrap();
        let top = sym_eig_largest(m.view(), 3).unwrap();
        let bottom = sym_eig_smallest(m.view(), 2).unwrap();
        for j in 0..3 {
            assert!((top.values[j] - full.values[j]).abs() < 1e-9);
            let dot = top.vectors.column(j).dot(&full.vectors.column(j));
            assert!((dot - 1.0).abs() < 1e-8, "same sign convention");
        }
        assert!((bottom.values[0] - full.values[29]).abs() < 1e-9);
        assert!((bottom.values[1] - full.values[28]).abs() < 1e-9);
    }

    #[test]
    fn large_double_centered_matrix_is_accurate() {
        // Double-centered squared distances of a long thin point cloud:
        // a wide spectrum with a large cluster near zero.
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = Matrix::from_shape_fn((n, 2), |(_, j)| rng.random_range(0.0..1.0) * if j == 0 { 90.0 } else { 21.0 });
        let mut b = Matrix::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (pts[[i, 0]] - pts[[j, 0]], pts[[i, 1]] - pts[[j, 1]]);
                b[[i, j]] = dx * dx + dy * dy;
            }
        }
        let means = b.mean_axis(Axis(0)).unwrap();
        let grand = means.mean().unwrap();
        for ((i, j), v) in b.indexed_iter_mut() {
            *v = -0.5 * (*v - means[i] - means[j] + grand);
        }
        let top = sym_eig_largest(b.view(), 3).unwrap();
        assert!(orthonormality_error(top.vectors.view()) < 1e-10);
        for j in 0..2 {
            let v = top.vectors.column(j);
            let r = b.dot(&v) - &v * top.values[j];
            assert!(r.dot(&r).sqrt() <= 1e-10 * top.values[0], "column {j}");
        }
        assert!(top.values[2].abs() <= 1e-9 * top.values[0], "rank two");
    }

    #[test]
    fn sign_convention_largest_component_positive() {
        let a = random_matrix(6, 6, 3);
        let m = &a + &a.t();
        let e = sym_eig(m.view()).unwrap();
        for col in e.vectors.columns() {
            let max = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn near_symmetric_input_is_symmetrized() {
        let mut m = array![[2.0, 1.0], [1.0, 3.0]];
        m[[0, 1]] += 1e-10;
        let e = sym_eig(m.view()).unwrap();
        assert!(orthonormality_error(e.vectors.view()) < 1e-12);
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(sym_eig(Matrix::zeros((2, 3)).view()), Err(MmsjError::InvalidMatrix(_))));
        let m = array![[1.0, f64::NAN], [f64::NAN, 1.0]];
        assert!(matches!(sym_eig(m.view()), Err(MmsjError::InvalidMatrix(_))));
        assert!(matches!(svd(m.view()), Err(MmsjError::InvalidMatrix(_))));
    }

    #[test]
    fn svd_zero_and_diagonal() {
        let z = svd(Matrix::zeros((3, 2)).view()).unwrap();
        assert!(z.singular_values.iter().all(|&s| s == 0.0));
        let d = svd(array![[3.0, 0.0], [0.0, 2.0]].view()).unwrap();
        assert!((d.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((d.singular_values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn svd_random_reconstruction() {
        for (rows, cols, seed) in [(4, 3, 1), (3, 4, 2), (7, 7, 3)] {
            let m = random_matrix(rows, cols, seed);
            let s = svd(m.view()).unwrap();
            let rec = (&s.u * &s.singular_values).dot(&s.v.t());
            assert!(frobenius_norm((rec - &m).view()) <= 1e-8 * frobenius_norm(m.view()));
            assert!(orthonormality_error(s.u.view()) <= 1e-8);
            assert!(orthonormality_error(s.v.view()) <= 1e-8);
            assert!(s.singular_values.windows(2).into_iter().all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn spd_solve() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let x = solve_spd(a.view(), &[1.0, 2.0]).unwrap();
        let r = a.dot(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        assert!(solve_spd(array![[0.0, 1.0], [1.0, 0.0]].view(), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn deterministic_outputs() {
        let a = random_matrix(8, 8, 5);
        let m = &a + &a.t();
        let e1 = sym_eig(m.view()).unwrap();
        let e2 = sym_eig(m.view()).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
        let s1 = svd(a.view()).unwrap();
        let s2 = svd(a.view()).unwrap();
        assert_eq!(s1.u, s2.u);
        assert_eq!(s1.v, s2.v);
    }
}
