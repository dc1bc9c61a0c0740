//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub(crate) fn hstack(blocks: &[&DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub(crate) fn vstack(blocks: &[&DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub(crate) fn vstack_vec(blocks: &[&DVector<f64>]) -> DVector<f64> {
    let len = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(len);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.len()).copy_from(*b);
        r += b.len();
    }
    out
}

/// Largest singular value.
pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the column space, keeping directions whose singular
/// value exceeds `abs_tol`. May return a matrix with zero columns.
pub(crate) fn range_basis(m: &DMatrix<f64>, abs_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let keep = svd.singular_values.iter().filter(|&&s| s > abs_tol).count();
    u.columns(0, keep).into_owned()
}

/// Singular values in descending order.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// `k` right singular vectors of a square complex matrix belonging to its
/// smallest singular values.
pub(crate) fn complex_null_vectors(m: DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    // rows of v_t are conjugated right singular vectors, sorted descending
    let mut out = DMatrix::zeros(n, k);
    for c in 0..k {
        let row = v_t.row(n - 1 - c);
        for r in 0..n {
            out[(r, c)] = row[r].conj();
        }
    }
    out
}

pub(crate) fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
