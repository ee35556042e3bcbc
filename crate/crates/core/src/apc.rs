//! The projection-consensus engine and the gradient-descent baseline.
//!
//! Each worker factors its block `A_j = Q1_j R_j`, solves
//! `R_j x = Q1_jᵀ b_j`, and keeps `P_j = I - Q1_jᵀ Q1_j`. Every epoch the
//! workers move toward the global average through `P_j` and the average is
//! relaxed with factor `eta`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::linalg::{
    back_substitute, gauss_jordan_inverse, householder_qr_economy, least_squares, matvec, matvec_transposed,
    projection_matrix, LinalgError, QrFactors,
};
use crate::matrix::{CsrMatrix, DenseMatrix, DenseVector};
use crate::partition::PartitionBlock;
use crate::trace::{ConvergenceTrace, TraceRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("partition {index}: {source}")]
    Partition { index: usize, source: LinalgError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Degenerate(&'static str),
    #[error("gradient descent diverged at epoch {epoch} with step size {step:e}")]
    Diverged { step: f64, epoch: u32 },
}

/// How each worker obtains its initial solution, or the gradient baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// QR factorization plus back-substitution.
    Decomposed,
    /// QR factorization plus an explicit Gauss-Jordan inverse of `R_j`.
    Classical,
    /// Distributed gradient descent.
    Dgd,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Decomposed => "decomposed",
            Mode::Classical => "classical",
            Mode::Dgd => "dgd",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "decomposed" => Ok(Mode::Decomposed),
            "classical" => Ok(Mode::Classical),
            "dgd" => Ok(Mode::Dgd),
            other => Err(format!("unknown mode `{other}` (expected decomposed, classical or dgd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub eta: f64,
    pub gamma: f64,
    pub partitions: usize,
    pub epochs: u32,
    pub mode: Mode,
    /// Gradient step; estimated from the spectrum when `None`.
    pub dgd_step: Option<f64>,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eta: 0.9,
            gamma: 0.9,
            partitions: 2,
            epochs: 50,
            mode: Mode::Decomposed,
            dgd_step: None,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolveError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.eta) {
            return Err(SolveError::InvalidParams(format!("eta = {} is outside (0, 1)", self.eta)));
        }
        if !open_unit(self.gamma) {
            return Err(SolveError::InvalidParams(format!("gamma = {} is outside (0, 1)", self.gamma)));
        }
        if self.partitions < 1 {
            return Err(SolveError::InvalidParams("at least one partition is required".into()));
        }
        if let Some(step) = self.dgd_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(SolveError::InvalidParams(format!("dgd step {step} must be positive")));
            }
        }
        Ok(())
    }
}

/// A worker after initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub index: usize,
    pub qr: QrFactors,
    pub projection: DenseMatrix,
    pub estimate: DenseVector,
}

impl WorkerState {
    pub fn projection_norm(&self) -> f64 {
        self.projection.max_abs()
    }
}

fn factor(block: &PartitionBlock) -> Result<(QrFactors, DenseVector), SolveError> {
    let at = |source| SolveError::Partition { index: block.index, source };
    let qr = householder_qr_economy(&block.a).map_err(at)?;
    let y = matvec_transposed(&qr.q1, &block.b).map_err(at)?;
    Ok((qr, y))
}

/// Initial solution by back-substitution on the QR factor.
pub fn init_worker_decomposed(block: &PartitionBlock) -> Result<WorkerState, SolveError> {
    let (qr, y) = factor(block)?;
    let estimate = back_substitute(&qr.r, &y).map_err(|source| SolveError::Partition { index: block.index, source })?;
    let projection = projection_matrix(&qr.q1);
    Ok(WorkerState { index: block.index, qr, projection, estimate })
}

/// Initial solution through an explicit inverse of the QR factor.
pub fn init_worker_classical(block: &PartitionBlock) -> Result<WorkerState, SolveError> {
    let (qr, y) = factor(block)?;
    let at = |source| SolveError::Partition { index: block.index, source };
    let inverse = gauss_jordan_inverse(&qr.r).map_err(at)?;
    let estimate = matvec(&inverse, &y).map_err(at)?;
    let projection = projection_matrix(&qr.q1);
    Ok(WorkerState { index: block.index, qr, projection, estimate })
}

pub fn init_worker(block: &PartitionBlock, mode: Mode) -> Result<WorkerState, SolveError> {
    match mode {
        Mode::Decomposed => init_worker_decomposed(block),
        Mode::Classical => init_worker_classical(block),
        Mode::Dgd => Err(SolveError::InvalidParams("gradient descent has no worker factorization".into())),
    }
}

fn check_lengths(op: &'static str, xs: &[DenseVector], n: usize) -> Result<(), SolveError> {
    match xs.iter().find(|x| x.len() != n) {
        Some(x) => Err(LinalgError::shape(op, n, x.len()).into()),
        None => Ok(()),
    }
}

/// Component-wise mean, summed in ascending partition order.
pub fn average_initial(xs: &[DenseVector]) -> Result<DenseVector, SolveError> {
    let first = xs.first().ok_or(SolveError::Degenerate("cannot average an empty set of estimates"))?;
    let n = first.len();
    check_lengths("average_initial", xs, n)?;
    let mut sum = vec![0.0; n];
    for x in xs {
        for (s, v) in sum.iter_mut().zip(x.iter()) {
            *s += v;
        }
    }
    let count = xs.len() as f64;
    Ok(DenseVector(sum.into_iter().map(|s| s / count).collect()))
}

/// `x_j + gamma * P_j (x_bar - x_j)`.
pub fn local_update(state: &WorkerState, x_bar: &[f64], gamma: f64) -> Result<DenseVector, SolveError> {
    let n = state.estimate.len();
    if x_bar.len() != n {
        return Err(LinalgError::shape("local_update", n, x_bar.len()).into());
    }
    let gap: Vec<f64> = x_bar.iter().zip(state.estimate.iter()).map(|(a, b)| a - b).collect();
    let step = matvec(&state.projection, &gap)?;
    Ok(DenseVector(state.estimate.iter().zip(step.iter()).map(|(x, s)| x + gamma * s).collect()))
}

/// `(eta / J) sum_k x_k + (1 - eta) x_bar_prev`, evaluated as
/// `x_bar_prev + eta * mean_k(x_k - x_bar_prev)` so that a common fixed
/// point is reproduced exactly.
pub fn consensus_update(xs: &[DenseVector], x_bar_prev: &[f64], eta: f64) -> Result<DenseVector, SolveError> {
    if xs.is_empty() {
        return Err(SolveError::Degenerate("cannot average an empty set of estimates"));
    }
    let n = x_bar_prev.len();
    check_lengths("consensus_update", xs, n)?;
    let mut dev = vec![0.0; n];
    for x in xs {
        for ((d, v), p) in dev.iter_mut().zip(x.iter()).zip(x_bar_prev) {
            *d += v - p;
        }
    }
    let count = xs.len() as f64;
    Ok(DenseVector(x_bar_prev.iter().zip(dev).map(|(p, d)| p + eta * (d / count)).collect()))
}

pub fn mse(x_hat: &[f64], x: &[f64]) -> Result<f64, SolveError> {
    if x_hat.len() != x.len() {
        return Err(LinalgError::shape("mse", x.len(), x_hat.len()).into());
    }
    if x.is_empty() {
        return Err(SolveError::Degenerate("mse of empty vectors"));
    }
    let sum = x_hat.iter().zip(x).fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
    Ok(sum / x.len() as f64)
}

fn optional_mse(x_hat: &[f64], x_ref: Option<&[f64]>) -> Result<Option<f64>, SolveError> {
    x_ref.map(|r| mse(x_hat, r)).transpose()
}

/// Accumulates a trace in the same way for every backend.
#[derive(Debug)]
pub struct TraceBuilder<'a> {
    trace: ConvergenceTrace,
    x_ref: Option<&'a [f64]>,
    started: Option<Instant>,
}

impl<'a> TraceBuilder<'a> {
    pub fn new(x_ref: Option<&'a [f64]>) -> Self {
        TraceBuilder { trace: ConvergenceTrace::default(), x_ref, started: None }
    }

    pub fn set_init(&mut self, seconds: f64, projection_norms: Vec<f64>) {
        self.trace.init_seconds = seconds;
        self.trace.projection_norms = projection_norms;
    }

    /// Starts the epoch clock; elapsed times are measured from here.
    pub fn start_epochs(&mut self) {
        self.started = Some(Instant::now());
    }

    pub fn record(&mut self, epoch: u32, x_bar: &[f64]) -> Result<Option<f64>, SolveError> {
        let mse = optional_mse(x_bar, self.x_ref)?;
        let elapsed_seconds = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        self.trace.records.push(TraceRecord { epoch, mse, elapsed_seconds });
        Ok(mse)
    }

    pub fn finish(mut self, final_x: DenseVector) -> ConvergenceTrace {
        self.trace.final_x = final_x;
        self.trace
    }
}

fn check_blocks(blocks: &[PartitionBlock], x_ref: Option<&[f64]>) -> Result<usize, SolveError> {
    let first = blocks.first().ok_or(SolveError::Degenerate("no partitions to solve"))?;
    let n = first.n_cols();
    if let Some(b) = blocks.iter().find(|b| b.n_cols() != n) {
        return Err(LinalgError::shape("run", n, b.n_cols()).into());
    }
    if let Some(r) = x_ref {
        if r.len() != n {
            return Err(LinalgError::shape("reference solution", n, r.len()).into());
        }
    }
    Ok(n)
}

/// Runs the consensus iteration in-process. Epoch 0 is the plain average of
/// the initial solutions; epochs `1..=T` follow.
pub fn run_apc(
    blocks: &[PartitionBlock],
    params: &SolverParams,
    x_ref: Option<&[f64]>,
) -> Result<ConvergenceTrace, SolveError> {
    params.validate()?;
    if params.mode == Mode::Dgd {
        return run_dgd(blocks, params, x_ref);
    }
    check_blocks(blocks, x_ref)?;

    let mut trace = TraceBuilder::new(x_ref);
    let init_started = Instant::now();
    let workers = blocks.iter().map(|b| init_worker(b, params.mode)).collect::<Result<Vec<_>, _>>()?;
    trace.set_init(init_started.elapsed().as_secs_f64(), workers.iter().map(WorkerState::projection_norm).collect());

    let mut workers = workers;
    let mut estimates: Vec<DenseVector> = workers.iter().map(|w| w.estimate.clone()).collect();
    let mut x_bar = average_initial(&estimates)?;
    trace.record(0, &x_bar)?;

    trace.start_epochs();
    for epoch in 1..=params.epochs {
        for (w, est) in workers.iter_mut().zip(estimates.iter_mut()) {
            *est = local_update(w, &x_bar, params.gamma)?;
            w.estimate.clone_from(est);
        }
        x_bar = consensus_update(&estimates, &x_bar, params.eta)?;
        trace.record(epoch, &x_bar)?;
    }
    Ok(trace.finish(x_bar))
}

/// `sum_j A_jᵀ (A_j x - b_j)` in partition order.
fn gradient(blocks: &[PartitionBlock], x: &[f64]) -> Result<Vec<f64>, SolveError> {
    let mut g = vec![0.0; x.len()];
    for blk in blocks {
        let mut r = matvec(&blk.a, x)?;
        for (ri, bi) in r.iter_mut().zip(blk.b.iter()) {
            *ri -= bi;
        }
        let gj = matvec_transposed(&blk.a, &r)?;
        for (a, b) in g.iter_mut().zip(gj.iter()) {
            *a += b;
        }
    }
    Ok(g)
}

const POWER_ITERATIONS: usize = 50;

/// `1 / lambda_max(AᵀA)` with the eigenvalue estimated by power iteration.
pub fn auto_dgd_step(blocks: &[PartitionBlock]) -> Result<f64, SolveError> {
    let n = check_blocks(blocks, None)?;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let mut w = vec![0.0; n];
        for blk in blocks {
            let av = matvec(&blk.a, &v)?;
            let atav = matvec_transposed(&blk.a, &av)?;
            for (a, b) in w.iter_mut().zip(atav.iter()) {
                *a += b;
            }
        }
        lambda = w.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
        if lambda == 0.0 {
            return Err(SolveError::Degenerate("coefficient matrix is zero"));
        }
        v = w.into_iter().map(|x| x / lambda).collect();
    }
    Ok(1.0 / lambda)
}

/// Gradient descent on `sum_j |A_j x - b_j|^2 / 2` from `x = 0`.
///
/// Fails when the error (MSE, or squared residual without a reference)
/// grows past `1e6` times its initial value.
pub fn run_dgd(
    blocks: &[PartitionBlock],
    params: &SolverParams,
    x_ref: Option<&[f64]>,
) -> Result<ConvergenceTrace, SolveError> {
    let n = check_blocks(blocks, x_ref)?;
    let mut trace = TraceBuilder::new(x_ref);
    let init_started = Instant::now();
    let step = match params.dgd_step {
        Some(s) => s,
        None => auto_dgd_step(blocks)?,
    };
    trace.set_init(init_started.elapsed().as_secs_f64(), Vec::new());

    let residual_sq = |x: &[f64]| -> Result<f64, SolveError> {
        let mut s = 0.0;
        for blk in blocks {
            let r = matvec(&blk.a, x)?;
            s += r.iter().zip(blk.b.iter()).fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
        }
        Ok(s)
    };
    let error = |x: &[f64], recorded: Option<f64>| match recorded {
        Some(m) => Ok(m),
        None => residual_sq(x),
    };

    let mut x = vec![0.0; n];
    let initial = error(&x, trace.record(0, &x)?)?;
    trace.start_epochs();
    for epoch in 1..=params.epochs {
        let g = gradient(blocks, &x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        let e = error(&x, trace.record(epoch, &x)?)?;
        if !e.is_finite() || e > 1e6 * initial.max(f64::MIN_POSITIVE) {
            return Err(SolveError::Diverged { step, epoch });
        }
    }
    Ok(trace.finish(DenseVector(x)))
}

/// Least-squares solution of the whole system with its residual 2-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: DenseVector,
    pub residual_norm: f64,
}

pub fn reference_solution(a: &CsrMatrix, b: &[f64]) -> Result<ReferenceSolution, SolveError> {
    if b.len() != a.nrows() {
        return Err(LinalgError::shape("reference_solution", a.nrows(), b.len()).into());
    }
    let x = least_squares(&a.to_dense(), b)?;
    let ax = a.matvec(&x)?;
    let residual_norm = ax.iter().zip(b).fold(0.0, |acc, (u, v)| acc + (u - v) * (u - v)).sqrt();
    Ok(ReferenceSolution { x, residual_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul;
    use crate::partition::{extract_all, plan_partitions};
    use crate::synth::{random_dense, random_vector, seeded_rng, synthetic_system};

    fn block(index: usize, a: DenseMatrix, b: Vec<f64>) -> PartitionBlock {
        PartitionBlock { index, a, b: DenseVector(b) }
    }

    fn state(p: DenseMatrix, x: Vec<f64>) -> WorkerState {
        let n = p.nrows();
        WorkerState {
            index: 0,
            qr: QrFactors { q1: DenseMatrix::identity(n), r: DenseMatrix::identity(n) },
            projection: p,
            estimate: DenseVector(x),
        }
    }

    #[test]
    fn identity_block_init() {
        let w = init_worker_decomposed(&block(0, DenseMatrix::identity(2), vec![3.0, 4.0])).unwrap();
        assert_eq!(w.estimate.0, vec![3.0, 4.0]);
        assert_eq!(w.projection, DenseMatrix::zeros(2, 2));
        let c = init_worker_classical(&block(0, DenseMatrix::identity(2), vec![3.0, 4.0])).unwrap();
        assert_eq!(c.estimate.0, vec![3.0, 4.0]);
    }

    #[test]
    fn diagonal_tall_block_init() {
        let a = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 2.0], [0.0, 0.0]]);
        let w = init_worker_decomposed(&block(0, a, vec![2.0, 4.0, 0.0])).unwrap();
        assert!((w.estimate[0] - 1.0).abs() < 1e-15 && (w.estimate[1] - 2.0).abs() < 1e-15);
        assert!(w.projection_norm() < 1e-15);
    }

    /// Normal equations `(AᵀA) x = Aᵀb` solved through the explicit inverse.
    fn normal_equations(a: &DenseMatrix, b: &[f64]) -> DenseVector {
        let ata = matmul(&a.transpose(), a).unwrap();
        let atb = matvec_transposed(a, b).unwrap();
        matvec(&gauss_jordan_inverse(&ata).unwrap(), &atb).unwrap()
    }

    #[test]
    fn tall_block_matches_normal_equations_and_classical() {
        let mut rng = seeded_rng(104);
        let a = random_dense(&mut rng, 10, 4);
        let b = random_vector(&mut rng, 10).0;
        let blk = block(3, a.clone(), b.clone());
        let dec = init_worker_decomposed(&blk).unwrap();
        let cla = init_worker_classical(&blk).unwrap();
        let oracle = normal_equations(&a, &b);
        for i in 0..4 {
            assert!((dec.estimate[i] - oracle[i]).abs() <= 1e-9);
            assert!((dec.estimate[i] - cla.estimate[i]).abs() <= 1e-8);
        }
        let pp = matmul(&dec.projection, &dec.projection).unwrap();
        assert!(pp.max_abs_diff(&dec.projection) <= 1e-10);
        assert!(dec.projection.max_abs_diff(&dec.projection.transpose()) <= 1e-12);
    }

    #[test]
    fn rank_deficient_block_names_partition() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        match init_worker_decomposed(&block(5, a, vec![1.0, 2.0, 3.0])) {
            Err(SolveError::Partition { index: 5, source: LinalgError::SingularPivot { .. } }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn averaging() {
        let xs = [DenseVector(vec![1.0, 1.0]), DenseVector(vec![3.0, 3.0])];
        assert_eq!(average_initial(&xs).unwrap().0, vec![2.0, 2.0]);
        let v = DenseVector(vec![0.1, -7.25, 3.3]);
        assert_eq!(average_initial(&[v.clone(), v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert!(average_initial(&[]).is_err());

        let mut rng = seeded_rng(5);
        let xs: Vec<DenseVector> = (0..5).map(|_| random_vector(&mut rng, 6)).collect();
        let got = average_initial(&xs).unwrap();
        for i in 0..6 {
            let mut s = 0.0;
            for x in &xs {
                s += x[i];
            }
            assert_eq!(got[i], s / 5.0);
        }
    }

    #[test]
    fn local_update_cases() {
        let zero = state(DenseMatrix::zeros(2, 2), vec![1.0, -1.0]);
        assert_eq!(local_update(&zero, &[9.0, 9.0], 0.7).unwrap().0, vec![1.0, -1.0]);
        let p = state(DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]), vec![1.0, 2.0]);
        assert_eq!(local_update(&p, &[1.0, 2.0], 0.3).unwrap().0, vec![1.0, 2.0]);
        let id = state(DenseMatrix::identity(2), vec![0.0, 0.0]);
        assert_eq!(local_update(&id, &[2.0, 4.0], 0.5).unwrap().0, vec![1.0, 2.0]);
        assert!(local_update(&id, &[1.0], 0.5).is_err());
    }

    #[test]
    fn consensus_update_cases() {
        let xs = [DenseVector(vec![2.0, 2.0]), DenseVector(vec![4.0, 4.0])];
        assert_eq!(consensus_update(&xs, &[0.0, 0.0], 1.0).unwrap().0, vec![3.0, 3.0]);
        assert_eq!(consensus_update(&xs, &[0.0, 0.0], 0.5).unwrap().0, vec![1.5, 1.5]);
        let v = DenseVector(vec![0.3, -1.7]);
        let same = vec![v.clone(); 3];
        assert_eq!(consensus_update(&same, &v, 0.9).unwrap(), v);
        assert!(consensus_update(&[], &v, 0.9).is_err());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = seeded_rng(77);
        let (a, b) = (random_vector(&mut rng, 9), random_vector(&mut rng, 9));
        let mut s = 0.0;
        for i in 0..9 {
            s += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert_eq!(mse(&a, &b).unwrap(), s / 9.0);
    }

    #[test]
    fn params_validation() {
        let ok = SolverParams::default();
        assert!(ok.validate().is_ok());
        for (eta, gamma) in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (f64::NAN, 0.5)] {
            let p = SolverParams { eta, gamma, ..ok.clone() };
            assert!(matches!(p.validate(), Err(SolveError::InvalidParams(_))));
        }
        assert!(SolverParams { partitions: 0, ..ok.clone() }.validate().is_err());
        assert!(SolverParams { dgd_step: Some(-1.0), ..ok }.validate().is_err());
    }

    fn fixture(n: usize, rows: usize, parts: usize, seed: u64) -> (Vec<PartitionBlock>, DenseVector) {
        let sys = synthetic_system(n, rows, seed).unwrap();
        let plan = plan_partitions(rows, n, parts).unwrap();
        let blocks = extract_all(&sys.a, &sys.b, &plan).unwrap();
        let x_ref = reference_solution(&sys.a, &sys.b).unwrap().x;
        (blocks, x_ref)
    }

    #[test]
    fn zero_epochs_is_the_initial_average() {
        let (blocks, x_ref) = fixture(4, 12, 2, 1);
        let params = SolverParams { epochs: 0, ..Default::default() };
        let t = run_apc(&blocks, &params, Some(&x_ref)).unwrap();
        assert_eq!(t.records.len(), 1);
        let inits: Vec<DenseVector> = blocks.iter().map(|b| init_worker_decomposed(b).unwrap().estimate).collect();
        assert_eq!(t.final_x, average_initial(&inits).unwrap());
    }

    #[test]
    fn stacked_eight_by_four_converges() {
        let (blocks, x_ref) = fixture(4, 8, 2, 2);
        let params = SolverParams { epochs: 50, ..Default::default() };
        let t = run_apc(&blocks, &params, Some(&x_ref)).unwrap();
        assert_eq!(t.records.len(), 51);
        assert!(t.final_mse().unwrap() <= 1e-10);
        assert_eq!(t.projection_norms.len(), 2);
    }

    #[test]
    fn reference_solution_cases() {
        let r = reference_solution(&CsrMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.x.0, vec![1.0, 2.0, 3.0]);
        let a = CsrMatrix::from_triplets(2, 1, vec![(0, 0, 3.0), (1, 0, 4.0)]);
        let r = reference_solution(&a, &[3.0, 4.0]).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-15);
        let sys = synthetic_system(6, 18, 3).unwrap();
        assert!(reference_solution(&sys.a, &sys.b).unwrap().residual_norm <= 1e-9);
    }

    #[test]
    fn dgd_identity_halving() {
        let b = vec![2.0, -4.0, 6.0];
        let blocks = vec![block(0, DenseMatrix::identity(3), b.clone())];
        let params = SolverParams { epochs: 1, dgd_step: Some(0.5), mode: Mode::Dgd, ..Default::default() };
        let t = run_dgd(&blocks, &params, Some(&b)).unwrap();
        assert_eq!(t.final_x.0, vec![1.0, -2.0, 3.0]);
        let t0 = run_dgd(&blocks, &SolverParams { epochs: 0, ..params.clone() }, None).unwrap();
        assert_eq!(t0.final_x.0, vec![0.0; 3]);
        let t40 = run_dgd(&blocks, &SolverParams { epochs: 40, ..params }, Some(&b)).unwrap();
        assert!(t40.final_mse().unwrap() < 1e-20);
    }

    #[test]
    fn dgd_divergence_names_step() {
        let blocks = vec![block(0, DenseMatrix::identity(2), vec![1.0, 1.0])];
        let params = SolverParams { epochs: 100, dgd_step: Some(3.5), mode: Mode::Dgd, ..Default::default() };
        match run_dgd(&blocks, &params, None) {
            Err(SolveError::Diverged { step, .. }) => assert_eq!(step, 3.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_step_inverts_largest_eigenvalue() {
        let a = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]);
        let step = auto_dgd_step(&[block(0, a, vec![0.0, 0.0])]).unwrap();
        assert!((step - 0.25).abs() < 1e-12);
    }
}
