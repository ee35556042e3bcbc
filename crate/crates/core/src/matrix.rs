//! In-memory matrix and vector containers.
//!
//! `CsrMatrix` holds the coefficient matrix as ingested; `DenseMatrix` and
//! `DenseVector` hold the per-partition blocks and all iteration state.

use std::ops::{Deref, DerefMut};

use crate::linalg::LinalgError;

/// Compressed sparse row matrix in canonical form.
///
/// Within every row the column indices are strictly increasing, so two
/// matrices with the same entries always compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a canonical CSR matrix from unordered triplets. Duplicate
    /// coordinates are summed in input order.
    ///
    /// Panics if a triplet lies outside `nrows x ncols`; callers that handle
    /// untrusted indices validate them first.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        for &(i, j, _) in &triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
        }
        // stable sort keeps duplicate summation in input order
        triplets.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Concatenates `top` over `bottom`; both must have the same column count.
    pub fn vstack(top: &CsrMatrix, bottom: &CsrMatrix) -> Result<Self, LinalgError> {
        if top.ncols != bottom.ncols {
            return Err(LinalgError::Shape {
                op: "vstack",
                expected: format!("{} columns", top.ncols),
                found: format!("{} columns", bottom.ncols),
            });
        }
        let offset = top.nnz();
        let mut row_ptr = top.row_ptr.clone();
        row_ptr.extend(bottom.row_ptr[1..].iter().map(|p| p + offset));
        let mut col_idx = top.col_idx.clone();
        col_idx.extend_from_slice(&bottom.col_idx);
        let mut values = top.values.clone();
        values.extend_from_slice(&bottom.values);
        Ok(CsrMatrix { nrows: top.nrows + bottom.nrows, ncols: top.ncols, row_ptr, col_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Stored value at `(i, j)`, or 0 when the entry is structurally absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Densifies rows `[row_start, row_end)`.
    pub fn row_block_dense(&self, row_start: usize, row_end: usize) -> Result<DenseMatrix, LinalgError> {
        if row_start >= row_end || row_end > self.nrows {
            return Err(LinalgError::Bounds {
                op: "row_block_dense",
                detail: format!("row range [{row_start}, {row_end}) invalid for {} rows", self.nrows),
            });
        }
        let mut out = DenseMatrix::zeros(row_end - row_start, self.ncols);
        for i in row_start..row_end {
            let (cols, vals) = self.row(i);
            let dst = out.row_mut(i - row_start);
            for (&j, &v) in cols.iter().zip(vals) {
                dst[j] = v;
            }
        }
        Ok(out)
    }

    /// `A * x` in ascending column order per row.
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::shape("csr_matvec", self.ncols, x.len()));
        }
        let out = (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).fold(0.0, |acc, (&j, &v)| acc + v * x[j])
            })
            .collect();
        Ok(DenseVector(out))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        if self.nrows == 0 {
            return DenseMatrix::zeros(0, self.ncols);
        }
        self.row_block_dense(0, self.nrows).expect("full range is valid")
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != nrows * ncols {
            return Err(LinalgError::Shape {
                op: "DenseMatrix::new",
                expected: format!("{} values for {nrows}x{ncols}", nrows * ncols),
                found: format!("{} values", data.len()),
            });
        }
        Ok(DenseMatrix { nrows, ncols, data })
    }

    /// Builds from nested rows; panics on ragged input. Intended for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        DenseMatrix { nrows, ncols, data }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.data[j * self.nrows + i] = self.data[i * self.ncols + j];
            }
        }
        t
    }

    /// Largest absolute entry of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn zeros(n: usize) -> Self {
        DenseVector(vec![0.0; n])
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}
