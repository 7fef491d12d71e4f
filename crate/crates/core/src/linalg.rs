//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue / singular value cutoff used for every pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse of a symmetric matrix through its eigendecomposition.
///
/// Eigenvalues with `|λ| <= rcond * max|λ|` are treated as zero.
pub fn sym_pinv(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    if max == 0.0 {
        return out;
    }
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= rcond * max {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / lambda;
    }
    // symmetrize away round-off
    let t = out.transpose();
    (out + t) * 0.5
}

/// Pseudo-inverse of an arbitrary matrix through the SVD.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if max == 0.0 || s <= rcond * max {
            continue;
        }
        out += vt.row(k).transpose() * u.column(k).transpose() / s;
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis of `ker(m)` as the columns of the returned matrix.
///
/// The row space is taken from the SVD with cutoff `rcond`; its orthogonal
/// complement is read off the eigenvectors of the complementary projector,
/// whose spectrum is {0, 1} and therefore well separated.
pub fn null_basis(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let max = svd.singular_values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let mut proj = DMatrix::<f64>::identity(n, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if max > 0.0 && s > rcond * max {
            let v = vt.row(k).transpose();
            proj -= &v * v.transpose();
        }
    }
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<_> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(k, _)| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Numerical rank with relative singular value cutoff.
pub fn rank(m: &DMatrix<f64>, rcond: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&v| v > rcond * max).count(),
        _ => 0,
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
