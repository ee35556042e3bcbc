//! Worker threads connected to the scheduler by channels.

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Instant;

use super::protocol::Message;
use super::session::{Reply, WorkerSession};
use super::{RuntimeError, Transport};

pub(crate) struct LocalPool {
    senders: Vec<Sender<(usize, Message)>>,
    replies: Receiver<(usize, Message)>,
    pending: Vec<VecDeque<Message>>,
    handles: Vec<JoinHandle<()>>,
}

impl LocalPool {
    /// `threads` worker threads hosting `parts` sessions, partition `j` on
    /// thread `j % threads`.
    pub(crate) fn spawn(parts: usize, threads: usize) -> Self {
        let threads = threads.clamp(1, parts.max(1));
        let (reply_tx, replies) = mpsc::channel();
        let mut senders = Vec::with_capacity(threads);
        let mut handles = Vec::with_capacity(threads);
        for t in 0..threads {
            let (tx, rx) = mpsc::channel::<(usize, Message)>();
            let reply_tx = reply_tx.clone();
            let handle = std::thread::Builder::new()
                .name(format!("dapc-worker-{t}"))
                .spawn(move || {
                    let mut sessions: HashMap<usize, WorkerSession> = HashMap::new();
                    for (j, msg) in rx {
                        let session = sessions.entry(j).or_default();
                        match session.handle(msg) {
                            Reply::Send(m) | Reply::SendAndClose(m) => {
                                if reply_tx.send((j, m)).is_err() {
                                    return;
                                }
                            }
                            Reply::Close => {}
                        }
                    }
                })
                .expect("spawn worker thread");
            senders.push(tx);
            handles.push(handle);
        }
        LocalPool { senders, replies, pending: (0..parts).map(|_| VecDeque::new()).collect(), handles }
    }
}

impl Transport for LocalPool {
    fn send(&mut self, index: usize, msg: &Message) -> Result<(), RuntimeError> {
        let t = index % self.senders.len();
        self.senders[t].send((index, msg.clone())).map_err(|_| RuntimeError::WorkerLost { index })
    }

    fn recv(&mut self, index: usize, deadline: Instant) -> Result<Message, RuntimeError> {
        if let Some(m) = self.pending[index].pop_front() {
            return Ok(m);
        }
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.replies.recv_timeout(wait) {
                Ok((j, m)) if j == index => return Ok(m),
                Ok((j, m)) => match self.pending.get_mut(j) {
                    Some(q) => q.push_back(m),
                    None => return Err(RuntimeError::unexpected(index, format!("reply for unknown partition {j}"))),
                },
                Err(RecvTimeoutError::Timeout) => return Err(RuntimeError::WorkerTimeout { index }),
                Err(RecvTimeoutError::Disconnected) => return Err(RuntimeError::WorkerLost { index }),
            }
        }
    }

    fn shutdown(&mut self) {
        for j in 0..self.pending.len() {
            let _ = self.send(j, &Message::Shutdown);
        }
        self.senders.clear();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
