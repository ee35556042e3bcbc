use super::{singularity_threshold, LinalgError};
use crate::matrix::{DenseMatrix, DenseVector};

/// Solves `r x = y` for upper-triangular `r`, last component first:
/// `x[p] = (y[p] - sum_{k>p} r[p][k] x[k]) / r[p][p]`.
///
/// Entries below the diagonal are ignored.
pub fn back_substitute(r: &DenseMatrix, y: &[f64]) -> Result<DenseVector, LinalgError> {
    if !r.is_square() {
        return Err(LinalgError::Shape {
            op: "back_substitute",
            expected: "square matrix".into(),
            found: format!("{}x{}", r.nrows(), r.ncols()),
        });
    }
    let n = r.nrows();
    if y.len() != n {
        return Err(LinalgError::shape("back_substitute", n, y.len()));
    }
    let threshold = singularity_threshold(n, r.max_abs());
    let mut x = vec![0.0; n];
    for p in (0..n).rev() {
        let row = r.row(p);
        let pivot = row[p];
        if pivot.abs() <= threshold {
            return Err(LinalgError::SingularPivot { index: p, value: pivot, threshold });
        }
        let tail = row[p + 1..].iter().zip(&x[p + 1..]).fold(0.0, |acc, (a, b)| acc + a * b);
        x[p] = (y[p] - tail) / pivot;
    }
    Ok(DenseVector(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gauss_jordan_inverse, matvec};
    use crate::testutil::{random_unit_upper, rng};

    #[test]
    fn identity_passthrough() {
        let x = back_substitute(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.0, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let r = DenseMatrix::from_rows(&[[2.0, 1.0], [0.0, 4.0]]);
        let x = back_substitute(&r, &[4.0, 8.0]).unwrap();
        assert_eq!(x.0, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_pivot_reports_row() {
        let r = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]);
        match back_substitute(&r, &[1.0, 1.0, 1.0]) {
            Err(LinalgError::SingularPivot { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn matches_inverse_times_rhs() {
        let mut g = rng(16);
        let r = random_unit_upper(&mut g, 16);
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = back_substitute(&r, &y).unwrap();
        let oracle = matvec(&gauss_jordan_inverse(&r).unwrap(), &y).unwrap();
        for (a, b) in x.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(back_substitute(&DenseMatrix::zeros(2, 3), &[0.0, 0.0]).is_err());
        assert!(back_substitute(&DenseMatrix::identity(2), &[0.0]).is_err());
    }
}
