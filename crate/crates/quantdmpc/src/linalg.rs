//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Smallest and largest eigenvalue of a symmetric matrix. Identically zero
/// rows are split off before the decomposition.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let active: Vec<usize> = (0..m.nrows()).filter(|&r| m.row(r).iter().any(|&v| v != 0.0)).collect();
    let (mut min, mut max) = if active.len() < m.nrows() { (0.0, 0.0) } else { (f64::INFINITY, f64::NEG_INFINITY) };
    if active.is_empty() {
        return (0.0, 0.0);
    }
    let sub = m.select_rows(&active).select_columns(&active);
    let mut values = sub.clone().symmetric_eigen().eigenvalues;
    if values.iter().any(|v| !v.is_finite()) {
        // Shift to a positive semidefinite matrix whose singular values are its eigenvalues.
        let shift = sub.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let n = sub.nrows();
        values = (sub + DMatrix::identity(n, n) * shift).singular_values().map(|s| s - shift);
    }
    for &v in values.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

/// Numerical rank from the singular values, relative tolerance `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > tol * top.max(f64::MIN_POSITIVE)).count()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Stack vectors end to end.
pub fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Inverse of [`concat`] given the block sizes.
pub fn split(v: &DVector<f64>, sizes: &[usize]) -> Vec<DVector<f64>> {
    let mut at = 0;
    sizes
        .iter()
        .map(|&s| {
            let p = v.rows(at, s).into_owned();
            at += s;
            p
        })
        .collect()
}

/// Block-diagonal matrix assembled from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.iter().map(|b| b.nrows()).sum();
    let m = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
