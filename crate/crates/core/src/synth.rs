//! Seeded random fixtures: matrices, and consistent augmented systems with
//! a known solution.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::{CsrMatrix, DenseMatrix, DenseVector};
use crate::partition::{augment_system, PartitionError};

pub type FixtureRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> FixtureRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform on `[-1, 1]`.
pub fn random_dense<R: Rng>(rng: &mut R, nrows: usize, ncols: usize) -> DenseMatrix {
    let data = (0..nrows * ncols).map(|_| rng.random_range(-1.0..=1.0)).collect();
    DenseMatrix::new(nrows, ncols, data).expect("length matches")
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> DenseVector {
    DenseVector((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

/// `nnz` distinct positions with values uniform on `[-1, 1]`.
pub fn random_csr<R: Rng>(rng: &mut R, nrows: usize, ncols: usize, nnz: usize) -> CsrMatrix {
    let positions = index::sample(rng, nrows * ncols, nnz.min(nrows * ncols)).into_vec();
    let triplets = positions.into_iter().map(|p| (p / ncols, p % ncols, rng.random_range(-1.0..=1.0))).collect();
    CsrMatrix::from_triplets(nrows, ncols, triplets)
}

/// Upper triangular with unit diagonal and off-diagonal entries on `[-1, 1] / n`.
pub fn random_unit_upper<R: Rng>(rng: &mut R, n: usize) -> DenseMatrix {
    let mut r = DenseMatrix::identity(n);
    let scale = 1.0 / n as f64;
    for i in 0..n {
        for j in i + 1..n {
            r.set(i, j, scale * rng.random_range(-1.0..=1.0));
        }
    }
    r
}

/// A consistent tall system `[A; D_A] x = [b; D_b]` with known `x`.
#[derive(Debug, Clone)]
pub struct SyntheticSystem {
    pub a: CsrMatrix,
    pub b: DenseVector,
    pub x: DenseVector,
    pub base_rows: usize,
    pub seed: u64,
}

/// Dense uniform base matrix of order `n`, random solution, and
/// `total_rows - n` augmented rows.
pub fn synthetic_system(n: usize, total_rows: usize, seed: u64) -> Result<SyntheticSystem, PartitionError> {
    if n == 0 || total_rows <= n {
        return Err(PartitionError::Degenerate(format!(
            "synthetic system needs total rows ({total_rows}) > columns ({n}) > 0"
        )));
    }
    let mut rng = seeded_rng(seed);
    let dense = random_dense(&mut rng, n, n);
    let mut triplets = Vec::with_capacity(n * n);
    for i in 0..n {
        triplets.extend(dense.row(i).iter().enumerate().map(|(j, &v)| (i, j, v)));
    }
    let base = CsrMatrix::from_triplets(n, n, triplets);
    let x = random_vector(&mut rng, n);
    let b = base.matvec(&x)?;
    let aug = augment_system(&base, &b, total_rows - n, seed.wrapping_add(1))?;
    let (a, b) = aug.stacked(&base, &b)?;
    Ok(SyntheticSystem { a, b, x, base_rows: n, seed })
}
