//! Distributed solver for consistent linear systems by projection-based
//! consensus over row-block partitions.
//!
//! The pipeline is: read `A` and `b` ([`mm`]), optionally append random row
//! combinations ([`partition::augment_system`]), split the rows into blocks
//! ([`partition::plan_partitions`]), and iterate either in-process
//! ([`apc::run_apc`]) or over worker threads or TCP workers
//! ([`runtime::scheduler_run`]).

pub mod apc;
pub mod linalg;
pub mod matrix;
pub mod mm;
pub mod partition;
pub mod runtime;
pub mod synth;
pub mod trace;

pub use apc::{Mode, SolveError, SolverParams};
pub use matrix::{CsrMatrix, DenseMatrix, DenseVector};
pub use mm::MmError;
pub use partition::PartitionError;
pub use runtime::RuntimeError;
pub use trace::ConvergenceTrace;
