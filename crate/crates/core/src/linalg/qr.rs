use super::LinalgError;
use crate::matrix::DenseMatrix;

/// Economy QR factors `a = q1 * r`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    /// m x n, orthonormal columns.
    pub q1: DenseMatrix,
    /// n x n upper triangular with a non-negative diagonal.
    pub r: DenseMatrix,
}

/// Householder reflector `H = I - beta * v vᵀ` with `v[0] = 1`.
struct Reflector {
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Reflector mapping `x` onto `|x| e1`, together with `|x|`.
    fn annihilating(x: &[f64]) -> (Self, f64) {
        let head = x[0];
        let tail_sq = x[1..].iter().fold(0.0, |acc, v| acc + v * v);
        let mut v = x.to_vec();
        v[0] = 1.0;
        if tail_sq == 0.0 {
            if head >= 0.0 {
                return (Reflector { v, beta: 0.0 }, head);
            }
            // pure sign flip
            return (Reflector { v, beta: 2.0 }, -head);
        }
        let norm = (head * head + tail_sq).sqrt();
        // cancellation-free choice of v[0] for a positive image
        let v0 = if head <= 0.0 { head - norm } else { -tail_sq / (head + norm) };
        let beta = 2.0 * v0 * v0 / (tail_sq + v0 * v0);
        for t in &mut v[1..] {
            *t /= v0;
        }
        (Reflector { v, beta }, norm)
    }

    /// Applies the reflector to rows `offset..` and columns `col_start..` of `w`.
    fn apply(&self, w: &mut DenseMatrix, offset: usize, col_start: usize, scratch: &mut Vec<f64>) {
        if self.beta == 0.0 {
            return;
        }
        let ncols = w.ncols();
        scratch.clear();
        scratch.resize(ncols - col_start, 0.0);
        for (k, &vk) in self.v.iter().enumerate() {
            let row = &w.row(offset + k)[col_start..];
            for (s, &x) in scratch.iter_mut().zip(row) {
                *s += vk * x;
            }
        }
        for (k, &vk) in self.v.iter().enumerate() {
            let f = self.beta * vk;
            let row = &mut w.row_mut(offset + k)[col_start..];
            for (x, &s) in row.iter_mut().zip(scratch.iter()) {
                *x -= f * s;
            }
        }
    }
}

/// Economy Householder QR of a tall matrix (`m >= n`).
///
/// Reflector signs make every `r[i][i] >= 0`, which fixes the factors
/// uniquely for full-rank input. Entries of `r` below the diagonal are
/// exactly zero.
pub fn householder_qr_economy(a: &DenseMatrix) -> Result<QrFactors, LinalgError> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        return Err(LinalgError::Shape {
            op: "householder_qr_economy",
            expected: format!("rows >= columns ({n})"),
            found: format!("{m} rows"),
        });
    }

    let mut w = a.clone();
    let mut reflectors = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);
    let mut column = Vec::with_capacity(m);
    for k in 0..n {
        column.clear();
        column.extend((k..m).map(|i| w.get(i, k)));
        let (h, diag) = Reflector::annihilating(&column);
        h.apply(&mut w, k, k + 1, &mut scratch);
        w.set(k, k, diag);
        for i in k + 1..m {
            w.set(i, k, 0.0);
        }
        reflectors.push(h);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for i in 0..n {
        r.row_mut(i)[i..].copy_from_slice(&w.row(i)[i..]);
    }

    // backward accumulation of H_0 ... H_{n-1} applied to [I_n; 0]
    let mut q1 = DenseMatrix::zeros(m, n);
    for i in 0..n {
        q1.set(i, i, 1.0);
    }
    for (k, h) in reflectors.iter().enumerate().rev() {
        h.apply(&mut q1, k, k, &mut scratch);
    }

    Ok(QrFactors { q1, r })
}

/// Least-squares solution of `a x = b` for tall full-rank `a`: reflectors
/// are applied to `b` directly, then `r x = (Qᵀ b)[..n]` is back-substituted.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<crate::matrix::DenseVector, LinalgError> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        return Err(LinalgError::Shape {
            op: "least_squares",
            expected: format!("rows >= columns ({n})"),
            found: format!("{m} rows"),
        });
    }
    if b.len() != m {
        return Err(LinalgError::shape("least_squares", m, b.len()));
    }
    // b rides along as an extra column so it sees the same reflectors
    let mut w = DenseMatrix::zeros(m, n + 1);
    for (i, &bi) in b.iter().enumerate() {
        let row = w.row_mut(i);
        row[..n].copy_from_slice(a.row(i));
        row[n] = bi;
    }
    let mut scratch = Vec::with_capacity(n + 1);
    let mut column = Vec::with_capacity(m);
    for k in 0..n {
        column.clear();
        column.extend((k..m).map(|i| w.get(i, k)));
        let (h, diag) = Reflector::annihilating(&column);
        h.apply(&mut w, k, k + 1, &mut scratch);
        w.set(k, k, diag);
    }
    let mut r = DenseMatrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for (i, yi) in y.iter_mut().enumerate() {
        r.row_mut(i)[i..].copy_from_slice(&w.row(i)[i..n]);
        *yi = w.get(i, n);
    }
    super::back_substitute(&r, &y)
}
