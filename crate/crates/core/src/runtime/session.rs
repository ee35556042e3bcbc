//! Worker-side protocol state machine, shared by the thread and socket
//! backends.
//!
//! The only legal request sequence is one `ASSIGN_PARTITION`, then
//! `BROADCAST_XBAR` for epochs 0, 1, 2, ... in order, then `SHUTDOWN`.
//! Anything else earns a single `ERROR` reply and ends the session.

use crate::apc::{init_worker, local_update, Mode, SolveError, WorkerState};
use crate::linalg::LinalgError;
use crate::mm::read_matrix_market_file;
use crate::partition::PartitionBlock;

use super::protocol::{Assignment, BlockSource, Message};

/// Error codes carried by `ERROR` frames.
pub mod codes {
    pub const PROTOCOL_ORDER: &str = "protocol-order";
    pub const UNEXPECTED_MESSAGE: &str = "unexpected-message";
    pub const MALFORMED_FRAME: &str = "malformed-frame";
    pub const SINGULAR_PIVOT: &str = "singular-pivot";
    pub const INIT_FAILED: &str = "init-failed";
    pub const INPUT_FORMAT: &str = "input-format";
    pub const DIMENSION: &str = "dimension";
}

#[derive(Debug)]
enum State {
    AwaitingAssignment,
    Ready { worker: Box<WorkerState>, gamma: f64, next_epoch: u32 },
    Finished,
}

/// What the transport should do after a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Send(Message),
    /// Send, then end the session.
    SendAndClose(Message),
    /// End the session without replying.
    Close,
}

#[derive(Debug)]
pub struct WorkerSession {
    state: State,
}

impl Default for WorkerSession {
    fn default() -> Self {
        Self::new()
    }
}

impl WorkerSession {
    pub fn new() -> Self {
        WorkerSession { state: State::AwaitingAssignment }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, State::Finished)
    }

    fn fail(&mut self, code: &str, message: impl Into<String>) -> Reply {
        self.state = State::Finished;
        Reply::SendAndClose(Message::error(code, message))
    }

    pub fn handle(&mut self, msg: Message) -> Reply {
        if self.is_finished() {
            return Reply::Close;
        }
        match msg {
            Message::Shutdown => {
                self.state = State::Finished;
                Reply::Close
            }
            Message::AssignPartition(assignment) => match self.state {
                State::AwaitingAssignment => self.assign(assignment),
                _ => self.fail(codes::PROTOCOL_ORDER, "partition already assigned"),
            },
            Message::BroadcastXbar { epoch, x_bar } => match &mut self.state {
                State::AwaitingAssignment => {
                    self.fail(codes::PROTOCOL_ORDER, "broadcast received before partition assignment")
                }
                State::Ready { worker, gamma, next_epoch } => {
                    if epoch != *next_epoch {
                        let expected = *next_epoch;
                        return self.fail(
                            codes::PROTOCOL_ORDER,
                            format!("broadcast for epoch {epoch}, expected epoch {expected}"),
                        );
                    }
                    match local_update(worker, &x_bar, *gamma) {
                        Ok(estimate) => {
                            worker.estimate.clone_from(&estimate);
                            *next_epoch += 1;
                            Reply::Send(Message::UpdateResult { epoch, estimate })
                        }
                        Err(e) => self.fail(codes::DIMENSION, e.to_string()),
                    }
                }
                State::Finished => Reply::Close,
            },
            other => self.fail(codes::UNEXPECTED_MESSAGE, format!("workers do not accept {:?} frames", other.tag())),
        }
    }

    fn assign(&mut self, assignment: Assignment) -> Reply {
        let index = assignment.index as usize;
        if assignment.mode == Mode::Dgd || !(assignment.gamma > 0.0 && assignment.gamma < 1.0) {
            return self.fail(codes::INIT_FAILED, format!("partition {index}: invalid mode or gamma"));
        }
        let block = match load_block(index, assignment.source) {
            Ok(b) => b,
            Err(msg) => return self.fail(codes::INPUT_FORMAT, format!("partition {index}: {msg}")),
        };
        match init_worker(&block, assignment.mode) {
            Ok(worker) => {
                let reply = Message::InitResult {
                    index: assignment.index,
                    estimate: worker.estimate.clone(),
                    projection_norm: worker.projection_norm(),
                };
                self.state = State::Ready { worker: Box::new(worker), gamma: assignment.gamma, next_epoch: 0 };
                Reply::Send(reply)
            }
            Err(e) => {
                let code = match &e {
                    SolveError::Partition {
                        source: LinalgError::SingularPivot { .. } | LinalgError::SingularMatrix { .. },
                        ..
                    } => codes::SINGULAR_PIVOT,
                    _ => codes::INIT_FAILED,
                };
                self.fail(code, e.to_string())
            }
        }
    }
}

fn load_block(index: usize, source: BlockSource) -> Result<PartitionBlock, String> {
    match source {
        BlockSource::Inline { a, b } => Ok(PartitionBlock { index, a, b }),
        BlockSource::Shared { matrix_path, rhs_path, row_start, row_end } => {
            let (start, end) = (row_start as usize, row_end as usize);
            let a = read_matrix_market_file(&matrix_path).map_err(|e| format!("{matrix_path}: {e}"))?.into_csr();
            let b = read_matrix_market_file(&rhs_path)
                .and_then(|m| m.into_vector())
                .map_err(|e| format!("{rhs_path}: {e}"))?;
            if b.len() != a.nrows() || end > b.len() {
                return Err(format!(
                    "rows [{start}, {end}) do not fit a {}-row system with {} right-hand side entries",
                    a.nrows(),
                    b.len()
                ));
            }
            let block = a.row_block_dense(start, end).map_err(|e| e.to_string())?;
            Ok(PartitionBlock { index, a: block, b: b[start..end].to_vec().into() })
        }
    }
}
