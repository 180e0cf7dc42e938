//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Eigenvalues below this (in absolute terms) are treated as roundoff and clamped to zero.
pub const PSD_TOLERANCE: f64 = 1e-12;

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn max_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen<T: Scalar>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn lambda_max<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    sym_eigen(m).eigenvalues.max()
}

pub fn lambda_min<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    sym_eigen(m).eigenvalues.min()
}

/// Checks symmetry to `tol` (relative to the largest entry).
pub fn check_symmetric<T: Scalar>(m: &DMatrix<T>, what: &str, tol: f64) -> Result<()> {
    let scale = T::one().max(m.amax());
    let asym = max_asymmetry(m);
    if asym > lit::<T>(tol) * scale {
        return Err(Error::Asymmetric {
            what: what.to_string(),
            asymmetry: to_f64(asym),
        });
    }
    Ok(())
}

/// Validates a covariance-like matrix: square, symmetric, eigenvalues no lower than
/// `-PSD_TOLERANCE`.
pub fn check_psd<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dimension(
            what,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    check_symmetric(m, what, PSD_TOLERANCE)?;
    let min = lambda_min(m);
    if min < lit(-PSD_TOLERANCE) {
        return Err(Error::Definiteness {
            what: what.to_string(),
            required: "positive semidefinite",
            min_eigenvalue: to_f64(min),
        });
    }
    Ok(())
}

/// Symmetric positive semidefinite square root. Eigenvalues in `[-PSD_TOLERANCE, 0)` are
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let eig = sym_eigen(m);
    let mut roots = eig.eigenvalues.clone();
    for ev in roots.iter_mut() {
        if *ev < lit(-PSD_TOLERANCE) {
            return Err(Error::Definiteness {
                what: what.to_string(),
                required: "positive semidefinite",
                min_eigenvalue: to_f64(*ev),
            });
        }
        *ev = ev.max(T::zero()).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Copy of block `(bi, bj)` of a matrix partitioned into `rows x cols` blocks.
pub fn block<T: Scalar>(
    m: &DMatrix<T>,
    bi: usize,
    bj: usize,
    rows: usize,
    cols: usize,
) -> DMatrix<T> {
    m.view((bi * rows, bj * cols), (rows, cols)).into_owned()
}

pub fn set_block<T: Scalar>(m: &mut DMatrix<T>, bi: usize, bj: usize, value: &DMatrix<T>) {
    let (r, c) = value.shape();
    m.view_mut((bi * r, bj * c), (r, c)).copy_from(value);
}

pub fn segment<T: Scalar>(v: &DVector<T>, b: usize, len: usize) -> DVector<T> {
    v.rows(b * len, len).into_owned()
}

pub fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `(I_k ⊗ m)`, the block diagonal with `k` copies of `m`.
pub fn repeat_diag<T: Scalar>(m: &DMatrix<T>, k: usize) -> DMatrix<T> {
    block_diag(&vec![m.clone(); k])
}

/// `k` stacked copies of `v`.
pub fn repeat_vec<T: Scalar>(v: &DVector<T>, k: usize) -> DVector<T> {
    let d = v.len();
    DVector::from_fn(d * k, |i, _| v[i % d])
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn pinv_solve<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    if a.is_empty() {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = T::default_epsilon() * lit::<T>(a.nrows().max(a.ncols()) as f64) * smax;
    svd.solve(b, eps).expect("svd computed with both factors")
}

pub fn frobenius<T: Scalar>(m: &DMatrix<T>) -> T {
    m.norm()
}
