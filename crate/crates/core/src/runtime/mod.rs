//! Scheduler and worker backends.
//!
//! The scheduler owns the consensus estimate and drives workers through the
//! framed protocol in [`protocol`]. Workers run either on local threads or
//! as TCP servers ([`worker_serve`]); both host a [`session::WorkerSession`].

mod local;
pub mod protocol;
pub mod session;
mod socket;

use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::apc::{average_initial, consensus_update, run_dgd, Mode, SolveError, SolverParams, TraceBuilder};
use crate::matrix::{CsrMatrix, DenseVector};
use crate::mm::MmError;
use crate::partition::{extract_all, plan_partitions, PartitionError, PartitionPlan};
use crate::trace::ConvergenceTrace;

pub use protocol::{decode_frame, encode_frame, DecodeError, FrameError, Message};
pub use socket::{worker_serve, WorkerServer};

use local::LocalPool;
use protocol::{Assignment, BlockSource};
use socket::SocketPool;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("could not connect to worker for partition {index} at {endpoint}: {source}")]
    Connect { index: usize, endpoint: String, source: io::Error },
    #[error("partition {index}: malformed frame from worker: {error}")]
    Protocol { index: usize, error: FrameError },
    #[error("partition {index}: worker did not answer before the deadline")]
    WorkerTimeout { index: usize },
    #[error("partition {index}: worker connection lost")]
    WorkerLost { index: usize },
    #[error("partition {index}: worker reported {code}: {message}")]
    Remote { index: usize, code: String, message: String },
    #[error("partition {index}: unexpected reply: {detail}")]
    UnexpectedReply { index: usize, detail: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Input(#[from] MmError),
    #[error("{0}")]
    Config(String),
}

impl RuntimeError {
    pub(crate) fn unexpected(index: usize, detail: impl Into<String>) -> Self {
        RuntimeError::UnexpectedReply { index, detail: detail.into() }
    }

    /// The partition this error is attributed to, if any.
    pub fn partition(&self) -> Option<usize> {
        match self {
            RuntimeError::Connect { index, .. }
            | RuntimeError::Protocol { index, .. }
            | RuntimeError::WorkerTimeout { index }
            | RuntimeError::WorkerLost { index }
            | RuntimeError::Remote { index, .. }
            | RuntimeError::UnexpectedReply { index, .. } => Some(*index),
            _ => None,
        }
    }
}

pub(crate) trait Transport {
    fn send(&mut self, index: usize, msg: &Message) -> Result<(), RuntimeError>;
    fn recv(&mut self, index: usize, deadline: Instant) -> Result<Message, RuntimeError>;
    /// Best effort; never fails.
    fn shutdown(&mut self);
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendKind {
    LocalThreads {
        threads: usize,
    },
    /// One endpoint per partition, in partition order.
    Sockets {
        endpoints: Vec<String>,
    },
}

/// Lets socket workers read their rows from files both sides can see
/// instead of receiving them inline.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedInput {
    pub matrix_path: String,
    pub rhs_path: String,
    /// Blocks with a dense size below this are still sent inline.
    pub min_block_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub connect_timeout: Duration,
    /// Deadline for every worker to answer `ASSIGN_PARTITION`.
    pub init_timeout: Duration,
    /// Deadline for every worker to answer one broadcast.
    pub epoch_timeout: Duration,
    pub shared: Option<SharedInput>,
}

impl BackendConfig {
    pub fn local(threads: usize) -> Self {
        BackendConfig {
            kind: BackendKind::LocalThreads { threads },
            connect_timeout: Duration::from_secs(10),
            init_timeout: Duration::from_secs(3600),
            epoch_timeout: Duration::from_secs(600),
            shared: None,
        }
    }

    pub fn sockets(endpoints: Vec<String>) -> Self {
        BackendConfig { kind: BackendKind::Sockets { endpoints }, ..Self::local(1) }
    }
}

/// Solves `A x = b` through worker backends. The trace matches
/// [`crate::apc::run_apc`] on the same blocks bit for bit, except for the
/// timing fields.
///
/// Gradient descent has no worker protocol and runs in the scheduler.
pub fn scheduler_run(
    a: &CsrMatrix,
    b: &[f64],
    params: &SolverParams,
    backend: &BackendConfig,
    x_ref: Option<&[f64]>,
) -> Result<ConvergenceTrace, RuntimeError> {
    params.validate()?;
    if b.len() != a.nrows() {
        return Err(RuntimeError::Config(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if let Some(r) = x_ref {
        if r.len() != a.ncols() {
            return Err(RuntimeError::Config(format!(
                "reference solution has {} entries, matrix has {} columns",
                r.len(),
                a.ncols()
            )));
        }
    }
    let plan = plan_partitions(a.nrows(), a.ncols(), params.partitions)?;
    if params.mode == Mode::Dgd {
        let blocks = extract_all(a, b, &plan)?;
        return Ok(run_dgd(&blocks, params, x_ref)?);
    }

    let mut transport: Box<dyn Transport> = match &backend.kind {
        BackendKind::LocalThreads { threads } => Box::new(LocalPool::spawn(plan.parts, *threads)),
        BackendKind::Sockets { endpoints } => {
            if endpoints.len() != plan.parts {
                return Err(RuntimeError::Config(format!(
                    "{} worker endpoints given for {} partitions",
                    endpoints.len(),
                    plan.parts
                )));
            }
            Box::new(SocketPool::connect(endpoints, backend.connect_timeout)?)
        }
    };
    let result = drive(transport.as_mut(), a, b, &plan, params, backend, x_ref);
    transport.shutdown();
    result
}

fn assignment(
    a: &CsrMatrix,
    b: &[f64],
    plan: &PartitionPlan,
    index: usize,
    params: &SolverParams,
    backend: &BackendConfig,
) -> Result<Message, RuntimeError> {
    let range = plan.ranges[index].clone();
    let dense_bytes = range.len() * plan.n_cols * 8;
    let shared = match (&backend.kind, &backend.shared) {
        (BackendKind::Sockets { .. }, Some(s)) if dense_bytes >= s.min_block_bytes => Some(s),
        _ => None,
    };
    let source = match shared {
        Some(s) => BlockSource::Shared {
            matrix_path: s.matrix_path.clone(),
            rhs_path: s.rhs_path.clone(),
            row_start: to_u32(range.start)?,
            row_end: to_u32(range.end)?,
        },
        None => BlockSource::Inline {
            a: a.row_block_dense(range.start, range.end).map_err(PartitionError::from)?,
            b: DenseVector(b[range].to_vec()),
        },
    };
    Ok(Message::AssignPartition(Assignment { index: to_u32(index)?, mode: params.mode, gamma: params.gamma, source }))
}

fn to_u32(v: usize) -> Result<u32, RuntimeError> {
    u32::try_from(v).map_err(|_| RuntimeError::Config(format!("{v} does not fit the wire format")))
}

fn check_remote(index: usize, msg: Message) -> Result<Message, RuntimeError> {
    match msg {
        Message::Error { code, message } => Err(RuntimeError::Remote { index, code, message }),
        m => Ok(m),
    }
}

fn drive(
    t: &mut dyn Transport,
    a: &CsrMatrix,
    b: &[f64],
    plan: &PartitionPlan,
    params: &SolverParams,
    backend: &BackendConfig,
    x_ref: Option<&[f64]>,
) -> Result<ConvergenceTrace, RuntimeError> {
    let n = plan.n_cols;
    let mut trace = TraceBuilder::new(x_ref);
    let init_started = Instant::now();
    for j in 0..plan.parts {
        let msg = assignment(a, b, plan, j, params, backend)?;
        t.send(j, &msg)?;
    }
    let deadline = Instant::now() + backend.init_timeout;
    let mut estimates = Vec::with_capacity(plan.parts);
    let mut norms = Vec::with_capacity(plan.parts);
    for j in 0..plan.parts {
        match check_remote(j, t.recv(j, deadline)?)? {
            Message::InitResult { index, estimate, projection_norm } if index as usize == j && estimate.len() == n => {
                estimates.push(estimate);
                norms.push(projection_norm);
            }
            other => return Err(RuntimeError::unexpected(j, format!("{:?} in reply to assignment", other.tag()))),
        }
    }
    trace.set_init(init_started.elapsed().as_secs_f64(), norms);

    let mut x_bar = average_initial(&estimates)?;
    trace.record(0, &x_bar)?;
    trace.start_epochs();
    for epoch in 1..=params.epochs {
        let wire_epoch = epoch - 1;
        let msg = Message::BroadcastXbar { epoch: wire_epoch, x_bar: x_bar.clone() };
        for j in 0..plan.parts {
            t.send(j, &msg)?;
        }
        let deadline = Instant::now() + backend.epoch_timeout;
        for (j, slot) in estimates.iter_mut().enumerate() {
            match check_remote(j, t.recv(j, deadline)?)? {
                Message::UpdateResult { epoch: e, estimate } if e == wire_epoch && estimate.len() == n => {
                    *slot = estimate;
                }
                Message::UpdateResult { epoch: e, .. } if e != wire_epoch => {
                    return Err(RuntimeError::unexpected(j, format!("update for epoch {e}, expected {wire_epoch}")));
                }
                other => return Err(RuntimeError::unexpected(j, format!("{:?} in reply to broadcast", other.tag()))),
            }
        }
        x_bar = consensus_update(&estimates, &x_bar, params.eta)?;
        trace.record(epoch, &x_bar)?;
    }
    Ok(trace.finish(x_bar))
}
