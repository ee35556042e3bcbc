//! Dense kernels used by the consensus engine.
//!
//! Every reduction sums in ascending index order, so results are
//! bit-identical across runs and across the in-process and networked
//! backends.

mod gauss_jordan;
mod qr;
mod triangular;

pub use gauss_jordan::gauss_jordan_inverse;
pub use qr::{householder_qr_economy, least_squares, QrFactors};
pub use triangular::back_substitute;

use thiserror::Error;

use crate::matrix::{DenseMatrix, DenseVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    Shape { op: &'static str, expected: String, found: String },
    #[error("{op}: {detail}")]
    Bounds { op: &'static str, detail: String },
    /// Zero-based pivot row `index` of a triangular factor is at or below the threshold.
    #[error("singular pivot at row {index}: |{value:e}| <= threshold {threshold:e}")]
    SingularPivot { index: usize, value: f64, threshold: f64 },
    /// No usable pivot in elimination column `column`.
    #[error("singular matrix: no pivot above {threshold:e} in column {column}")]
    SingularMatrix { column: usize, threshold: f64 },
}

impl LinalgError {
    pub(crate) fn shape(op: &'static str, expected: usize, found: usize) -> Self {
        LinalgError::Shape { op, expected: expected.to_string(), found: found.to_string() }
    }
}

/// Magnitude at or below which a pivot is treated as zero:
/// `1e3 * eps * n * scale`, with `scale` the largest absolute input entry.
pub fn singularity_threshold(n: usize, scale: f64) -> f64 {
    1e3 * f64::EPSILON * n as f64 * scale
}

/// `m * v`.
pub fn matvec(m: &DenseMatrix, v: &[f64]) -> Result<DenseVector, LinalgError> {
    if v.len() != m.ncols() {
        return Err(LinalgError::shape("matvec", m.ncols(), v.len()));
    }
    let out = (0..m.nrows()).map(|i| dot(m.row(i), v)).collect();
    Ok(DenseVector(out))
}

/// `mᵀ * v`, each output component summed over ascending row index.
pub fn matvec_transposed(m: &DenseMatrix, v: &[f64]) -> Result<DenseVector, LinalgError> {
    if v.len() != m.nrows() {
        return Err(LinalgError::shape("matvec_transposed", m.nrows(), v.len()));
    }
    let mut out = vec![0.0; m.ncols()];
    for (i, &vi) in v.iter().enumerate() {
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += mij * vi;
        }
    }
    Ok(DenseVector(out))
}

/// `qᵀ * q`. The result is exactly symmetric.
pub fn matmul_transpose_self(q: &DenseMatrix) -> DenseMatrix {
    let n = q.ncols();
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..q.nrows() {
        let row = q.row(i);
        for a in 0..n {
            let qa = row[a];
            let dst = &mut c.row_mut(a)[a..];
            for (d, &qb) in dst.iter_mut().zip(&row[a..]) {
                *d += qa * qb;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            let v = c.get(b, a);
            c.set(a, b, v);
        }
    }
    c
}

/// `I - qᵀq`, the nullspace projection built from a semi-orthogonal factor.
pub fn projection_matrix(q1: &DenseMatrix) -> DenseMatrix {
    let mut p = matmul_transpose_self(q1);
    let n = p.nrows();
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            let v = id - p.get(i, j);
            p.set(i, j, v);
        }
    }
    p
}

/// `a * b` for dense operands.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.ncols() != b.nrows() {
        return Err(LinalgError::shape("matmul", a.ncols(), b.nrows()));
    }
    let mut c = DenseMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for (k, &aik) in a.row(i).iter().enumerate() {
            let brow = b.row(k);
            for (cij, &bkj) in c.row_mut(i).iter_mut().zip(brow) {
                *cij += aik * bkj;
            }
        }
    }
    Ok(c)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}
