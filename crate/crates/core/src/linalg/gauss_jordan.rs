use super::{singularity_threshold, LinalgError};
use crate::matrix::DenseMatrix;

/// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
///
/// O(n³); kept as the classical baseline against which back-substitution
/// is measured.
pub fn gauss_jordan_inverse(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Shape {
            op: "gauss_jordan_inverse",
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let n = m.nrows();
    let threshold = singularity_threshold(n, m.max_abs());
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    let mut pivot_a = vec![0.0; n];
    let mut pivot_inv = vec![0.0; n];

    for c in 0..n {
        let mut best = c;
        for r in c + 1..n {
            if a.get(r, c).abs() > a.get(best, c).abs() {
                best = r;
            }
        }
        let pivot = a.get(best, c);
        if pivot.abs() <= threshold {
            return Err(LinalgError::SingularMatrix { column: c, threshold });
        }
        if best != c {
            swap_rows(&mut a, best, c);
            swap_rows(&mut inv, best, c);
        }

        for (dst, src) in pivot_a[c..].iter_mut().zip(&a.row(c)[c..]) {
            *dst = src / pivot;
        }
        for (dst, src) in pivot_inv.iter_mut().zip(inv.row(c)) {
            *dst = src / pivot;
        }
        a.row_mut(c)[c..].copy_from_slice(&pivot_a[c..]);
        inv.row_mut(c).copy_from_slice(&pivot_inv);

        for r in 0..n {
            if r == c {
                continue;
            }
            let f = a.get(r, c);
            if f == 0.0 {
                continue;
            }
            for (x, &p) in a.row_mut(r)[c..].iter_mut().zip(&pivot_a[c..]) {
                *x -= f * p;
            }
            for (x, &p) in inv.row_mut(r).iter_mut().zip(&pivot_inv) {
                *x -= f * p;
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, i: usize, j: usize) {
    for c in 0..m.ncols() {
        let t = m.get(i, c);
        m.set(i, c, m.get(j, c));
        m.set(j, c, t);
    }
}
