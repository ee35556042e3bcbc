//! Row-block partitioning, block extraction, and system augmentation.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::linalg::{householder_qr_economy, singularity_threshold, LinalgError};
use crate::matrix::{CsrMatrix, DenseMatrix, DenseVector};
use crate::synth::seeded_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("degenerate partitioning: {0}")]
    Degenerate(String),
    #[error(
        "infeasible partitioning: {total_rows} rows over {parts} partitions gives {chunk_size} rows per \
         partition, fewer than the {n_cols} columns; need (m+n)/J >= n"
    )]
    Infeasible { total_rows: usize, parts: usize, chunk_size: usize, n_cols: usize },
    #[error("partition index {index} out of range for {parts} partitions")]
    IndexOutOfRange { index: usize, parts: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Contiguous row ranges, one per partition. The last range absorbs the
/// remainder of `total_rows / parts`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub total_rows: usize,
    pub n_cols: usize,
    pub parts: usize,
    pub chunk_size: usize,
    pub ranges: Vec<Range<usize>>,
}

pub fn plan_partitions(total_rows: usize, n_cols: usize, parts: usize) -> Result<PartitionPlan, PartitionError> {
    if parts == 0 {
        return Err(PartitionError::Degenerate("at least one partition is required".into()));
    }
    if parts > total_rows {
        return Err(PartitionError::Degenerate(format!("{parts} partitions exceed {total_rows} rows")));
    }
    let chunk_size = total_rows / parts;
    if chunk_size < n_cols {
        return Err(PartitionError::Infeasible { total_rows, parts, chunk_size, n_cols });
    }
    let ranges = (0..parts)
        .map(|j| {
            let end = if j + 1 == parts { total_rows } else { (j + 1) * chunk_size };
            j * chunk_size..end
        })
        .collect();
    Ok(PartitionPlan { total_rows, n_cols, parts, chunk_size, ranges })
}

/// One worker's dense rows of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionBlock {
    pub index: usize,
    pub a: DenseMatrix,
    pub b: DenseVector,
}

impl PartitionBlock {
    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }
}

pub fn extract_block(
    a: &CsrMatrix,
    b: &[f64],
    plan: &PartitionPlan,
    index: usize,
) -> Result<PartitionBlock, PartitionError> {
    if index >= plan.parts {
        return Err(PartitionError::IndexOutOfRange { index, parts: plan.parts });
    }
    if a.nrows() != plan.total_rows || b.len() != plan.total_rows || a.ncols() != plan.n_cols {
        return Err(LinalgError::Shape {
            op: "extract_block",
            expected: format!("{}x{} system with matching rhs", plan.total_rows, plan.n_cols),
            found: format!("{}x{} matrix, rhs of {}", a.nrows(), a.ncols(), b.len()),
        }
        .into());
    }
    let range = plan.ranges[index].clone();
    let block = a.row_block_dense(range.start, range.end)?;
    Ok(PartitionBlock { index, a: block, b: DenseVector(b[range].to_vec()) })
}

/// Extracts every block of `plan` in partition order.
pub fn extract_all(a: &CsrMatrix, b: &[f64], plan: &PartitionPlan) -> Result<Vec<PartitionBlock>, PartitionError> {
    (0..plan.parts).map(|j| extract_block(a, b, plan, j)).collect()
}

/// Shape of the random row combinations used for augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    /// Source rows combined into each extra row.
    pub sources_per_row: usize,
    /// Coefficients are uniform on `[-coeff_bound, coeff_bound]`.
    pub coeff_bound: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions { sources_per_row: 3, coeff_bound: 1.0 }
    }
}

/// Extra rows `[d_a | d_b]` built as linear combinations of `[a | b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub d_a: CsrMatrix,
    pub d_b: DenseVector,
    pub seed: u64,
}

impl AugmentedSystem {
    /// `[a; d_a]` and `[b; d_b]`.
    pub fn stacked(&self, a: &CsrMatrix, b: &[f64]) -> Result<(CsrMatrix, DenseVector), LinalgError> {
        let m = CsrMatrix::vstack(a, &self.d_a)?;
        let mut v = b.to_vec();
        v.extend_from_slice(&self.d_b);
        Ok((m, DenseVector(v)))
    }
}

pub fn augment_system(
    a: &CsrMatrix,
    b: &[f64],
    extra_rows: usize,
    seed: u64,
) -> Result<AugmentedSystem, PartitionError> {
    augment_system_with(a, b, extra_rows, seed, AugmentOptions::default())
}

/// Extra row `i` combines source row `i mod n` with `sources_per_row - 1`
/// further distinct rows drawn at random. The anchor row makes every
/// window of `n` consecutive extra rows structurally full rank.
pub fn augment_system_with(
    a: &CsrMatrix,
    b: &[f64],
    extra_rows: usize,
    seed: u64,
    opts: AugmentOptions,
) -> Result<AugmentedSystem, PartitionError> {
    if extra_rows < 1 {
        return Err(PartitionError::Degenerate("augmentation needs at least one extra row".into()));
    }
    if opts.sources_per_row < 1 || !(opts.coeff_bound > 0.0 && opts.coeff_bound.is_finite()) {
        return Err(PartitionError::Degenerate("augmentation options out of range".into()));
    }
    let n = a.nrows();
    if n == 0 || b.len() != n {
        return Err(LinalgError::Shape {
            op: "augment_system",
            expected: format!("non-empty matrix with rhs of {n}"),
            found: format!("{}x{} matrix, rhs of {}", a.nrows(), a.ncols(), b.len()),
        }
        .into());
    }
    let s = opts.sources_per_row.min(n);
    let mut rng = seeded_rng(seed);
    let mut triplets = Vec::new();
    let mut d_b = Vec::with_capacity(extra_rows);
    let mut sources: Vec<(usize, f64)> = Vec::with_capacity(s);
    for i in 0..extra_rows {
        let anchor = i % n;
        sources.clear();
        sources.push((anchor, 0.0));
        for k in index::sample(&mut rng, n - 1, s - 1) {
            sources.push((if k >= anchor { k + 1 } else { k }, 0.0));
        }
        sources.sort_by_key(|&(k, _)| k);
        for src in sources.iter_mut() {
            src.1 = rng.random_range(-opts.coeff_bound..=opts.coeff_bound);
        }

        let mut rhs = 0.0;
        for &(k, c) in &sources {
            let (cols, vals) = a.row(k);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, c * v)));
            rhs += c * b[k];
        }
        d_b.push(rhs);
    }
    Ok(AugmentedSystem { d_a: CsrMatrix::from_triplets(extra_rows, a.ncols(), triplets), d_b: DenseVector(d_b), seed })
}

/// True when the block is tall enough and its QR factor has no pivot at
/// or below the singularity threshold.
pub fn validate_rank(block: &PartitionBlock) -> bool {
    match householder_qr_economy(&block.a) {
        Ok(f) => {
            let n = f.r.nrows();
            let threshold = singularity_threshold(n, f.r.max_abs());
            (0..n).all(|p| f.r.get(p, p).abs() > threshold)
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_csr, random_dense};

    fn ranges(plan: &PartitionPlan) -> Vec<(usize, usize)> {
        plan.ranges.iter().map(|r| (r.start, r.end)).collect()
    }

    #[test]
    fn exact_division() {
        let p = plan_partitions(10, 2, 5).unwrap();
        assert_eq!(ranges(&p), vec![(0, 2), (2, 4), (4, 6), (6, 8), (8, 10)]);
    }

    #[test]
    fn remainder_goes_last() {
        let p = plan_partitions(11, 2, 5).unwrap();
        assert_eq!(ranges(&p), vec![(0, 2), (2, 4), (4, 6), (6, 8), (8, 11)]);
    }

    #[test]
    fn augmented_dataset_shape() {
        let p = plan_partitions(18252, 4563, 4).unwrap();
        assert_eq!(p.chunk_size, 4563);
        assert!(p.ranges.iter().all(|r| r.len() == 4563));
    }

    #[test]
    fn infeasible_and_degenerate() {
        assert!(matches!(plan_partitions(8, 4, 3), Err(PartitionError::Infeasible { chunk_size: 2, .. })));
        assert!(matches!(plan_partitions(3, 1, 4), Err(PartitionError::Degenerate(_))));
        assert!(matches!(plan_partitions(3, 1, 0), Err(PartitionError::Degenerate(_))));
        let msg = plan_partitions(8, 4, 3).unwrap_err().to_string();
        assert!(msg.contains("(m+n)/J >= n"), "{msg}");
    }

    #[test]
    fn identity_block() {
        let a = CsrMatrix::identity(4);
        let b = [1.0, 2.0, 3.0, 4.0];
        let plan = PartitionPlan { total_rows: 4, n_cols: 4, parts: 2, chunk_size: 2, ranges: vec![0..2, 2..4] };
        let blk = extract_block(&a, &b, &plan, 1).unwrap();
        assert_eq!(blk.a, DenseMatrix::from_rows(&[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]));
        assert_eq!(blk.b.0, vec![3.0, 4.0]);
        assert!(matches!(extract_block(&a, &b, &plan, 2), Err(PartitionError::IndexOutOfRange { .. })));
    }

    #[test]
    fn seeded_block_matches_direct_lookup() {
        let mut rng = seeded_rng(3);
        let a = random_csr(&mut rng, 12, 3, 20);
        let b: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let plan = plan_partitions(12, 3, 3).unwrap();
        let blk = extract_block(&a, &b, &plan, 2).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(blk.a.get(i, j), a.get(8 + i, j));
            }
        }
        assert_eq!(blk.b.0, &b[8..12]);
    }

    #[test]
    fn single_source_rows_are_scaled_copies() {
        let mut rng = seeded_rng(5);
        let a = random_csr(&mut rng, 4, 4, 10);
        let b = [1.0, -2.0, 0.5, 3.0];
        let opts = AugmentOptions { sources_per_row: 1, coeff_bound: 1.0 };
        let aug = augment_system_with(&a, &b, 1, 11, opts).unwrap();
        // row 0 is the anchor; the single coefficient is recoverable from d_b
        let c = aug.d_b[0] / b[0];
        for j in 0..4 {
            assert!((aug.d_a.get(0, j) - c * a.get(0, j)).abs() <= 1e-15);
        }
    }

    #[test]
    fn augmentation_preserves_solution_exactly_for_integer_systems() {
        // with one source a row is c*(row k) and c*b_k; integer x keeps the
        // base residual exactly zero
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        let x = [1.0, 2.0];
        let b = a.matvec(&x).unwrap();
        let aug = augment_system(&a, &b, 5, 1).unwrap();
        let r = aug.d_a.matvec(&x).unwrap();
        for (ri, bi) in r.iter().zip(aug.d_b.iter()) {
            assert!((ri - bi).abs() <= 1e-14);
        }
    }

    #[test]
    fn augmentation_is_deterministic() {
        let mut rng = seeded_rng(8);
        let a = random_csr(&mut rng, 6, 6, 20);
        let b = vec![1.0; 6];
        let x = augment_system(&a, &b, 7, 42).unwrap();
        let y = augment_system(&a, &b, 7, 42).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, augment_system(&a, &b, 7, 43).unwrap());
        assert!(matches!(augment_system(&a, &b, 0, 1), Err(PartitionError::Degenerate(_))));
    }

    #[test]
    fn rank_checks() {
        let id = PartitionBlock { index: 0, a: DenseMatrix::identity(3), b: DenseVector::zeros(3) };
        assert!(validate_rank(&id));
        let dup = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 1.0], [3.0, 3.0, 0.0], [0.5, 0.5, 2.0]]);
        assert!(!validate_rank(&PartitionBlock { index: 0, a: dup, b: DenseVector::zeros(4) }));
        let wide = PartitionBlock { index: 0, a: DenseMatrix::zeros(2, 3), b: DenseVector::zeros(2) };
        assert!(!validate_rank(&wide));
    }

    /// Rank by Gaussian elimination with partial pivoting.
    fn elimination_rank(m: &DenseMatrix) -> usize {
        let mut a = m.clone();
        let (rows, cols) = (a.nrows(), a.ncols());
        let tol = 1e-10 * a.max_abs().max(1.0);
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows).max_by(|&x, &y| a.get(x, c).abs().total_cmp(&a.get(y, c).abs())) else {
                break;
            };
            if a.get(p, c).abs() <= tol {
                continue;
            }
            for k in 0..cols {
                let t = a.get(p, k);
                a.set(p, k, a.get(rank, k));
                a.set(rank, k, t);
            }
            for r in rank + 1..rows {
                let f = a.get(r, c) / a.get(rank, c);
                for k in c..cols {
                    let v = a.get(r, k) - f * a.get(rank, k);
                    a.set(r, k, v);
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn random_tall_blocks_agree_with_elimination_rank() {
        let mut rng = seeded_rng(10);
        for _ in 0..20 {
            let a = random_dense(&mut rng, 10, 4);
            let block = PartitionBlock { index: 0, a: a.clone(), b: DenseVector::zeros(10) };
            assert_eq!(validate_rank(&block), elimination_rank(&a) == 4);
        }
    }
}
