//! TCP transport: workers listen, the scheduler connects to each.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::protocol::{read_message, write_message, Message, StreamError};
use super::session::{codes, Reply, WorkerSession};
use super::{RuntimeError, Transport};

/// A bound worker endpoint.
pub struct WorkerServer {
    listener: TcpListener,
}

impl WorkerServer {
    pub fn bind(endpoint: &str) -> Result<Self, RuntimeError> {
        let listener = TcpListener::bind(endpoint)
            .map_err(|source| RuntimeError::Io { context: format!("binding {endpoint}"), source })?;
        Ok(WorkerServer { listener })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Serves scheduler connections one at a time until a `SHUTDOWN` frame
    /// arrives. A connection that drops or misbehaves is closed and the
    /// next one accepted.
    pub fn serve(self) -> Result<(), RuntimeError> {
        loop {
            let (stream, peer) = self
                .listener
                .accept()
                .map_err(|source| RuntimeError::Io { context: "accepting connection".into(), source })?;
            match serve_connection(stream) {
                Ok(true) => return Ok(()),
                Ok(false) => {}
                Err(e) => eprintln!("worker: connection from {peer} ended: {e}"),
            }
        }
    }
}

/// Binds `endpoint` and serves until shut down.
pub fn worker_serve(endpoint: &str) -> Result<(), RuntimeError> {
    WorkerServer::bind(endpoint)?.serve()
}

/// Returns `Ok(true)` when the scheduler asked the worker to exit.
fn serve_connection(stream: TcpStream) -> io::Result<bool> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut session = WorkerSession::new();
    loop {
        let msg = match read_message(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(false),
            Err(StreamError::Frame(e)) => {
                write_message(&mut writer, &Message::error(codes::MALFORMED_FRAME, e.to_string()))?;
                return Ok(false);
            }
            Err(StreamError::Io(e)) => return Err(e),
        };
        let shutdown = matches!(msg, Message::Shutdown);
        match session.handle(msg) {
            Reply::Send(m) => write_message(&mut writer, &m)?,
            Reply::SendAndClose(m) => {
                write_message(&mut writer, &m)?;
                return Ok(false);
            }
            Reply::Close => return Ok(shutdown),
        }
    }
}

pub(crate) struct SocketPool {
    readers: Vec<BufReader<TcpStream>>,
    writers: Vec<BufWriter<TcpStream>>,
}

fn connect(endpoint: &str, index: usize, timeout: Duration) -> Result<TcpStream, RuntimeError> {
    let deadline = Instant::now() + timeout;
    let mut last_err = None;
    loop {
        let addrs: Vec<SocketAddr> = match endpoint.to_socket_addrs() {
            Ok(a) => a.collect(),
            Err(source) => return Err(RuntimeError::Io { context: format!("resolving {endpoint}"), source }),
        };
        for addr in &addrs {
            let left = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
            match TcpStream::connect_timeout(addr, left) {
                Ok(s) => return Ok(s),
                Err(e) => last_err = Some(e),
            }
        }
        if Instant::now() >= deadline {
            let source = last_err.unwrap_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no addresses"));
            return Err(RuntimeError::Connect { index, endpoint: endpoint.to_owned(), source });
        }
        // worker processes may still be starting
        std::thread::sleep(Duration::from_millis(25));
    }
}

impl SocketPool {
    pub(crate) fn connect(endpoints: &[String], timeout: Duration) -> Result<Self, RuntimeError> {
        let mut readers = Vec::with_capacity(endpoints.len());
        let mut writers = Vec::with_capacity(endpoints.len());
        for (index, ep) in endpoints.iter().enumerate() {
            let stream = connect(ep, index, timeout)?;
            let io_err = |source| RuntimeError::Io { context: format!("configuring {ep}"), source };
            stream.set_nodelay(true).map_err(io_err)?;
            readers.push(BufReader::new(stream.try_clone().map_err(io_err)?));
            writers.push(BufWriter::new(stream));
        }
        Ok(SocketPool { readers, writers })
    }
}

impl Transport for SocketPool {
    fn send(&mut self, index: usize, msg: &Message) -> Result<(), RuntimeError> {
        write_message(&mut self.writers[index], msg).map_err(|_| RuntimeError::WorkerLost { index })
    }

    fn recv(&mut self, index: usize, deadline: Instant) -> Result<Message, RuntimeError> {
        let wait = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
        let reader = &mut self.readers[index];
        reader
            .get_ref()
            .set_read_timeout(Some(wait))
            .map_err(|source| RuntimeError::Io { context: format!("partition {index}"), source })?;
        match read_message(reader) {
            Ok(Some(m)) => Ok(m),
            Ok(None) => Err(RuntimeError::WorkerLost { index }),
            Err(StreamError::Frame(error)) => Err(RuntimeError::Protocol { index, error }),
            Err(StreamError::Io(e)) => match e.kind() {
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Err(RuntimeError::WorkerTimeout { index }),
                _ => Err(RuntimeError::WorkerLost { index }),
            },
        }
    }

    fn shutdown(&mut self) {
        for w in &mut self.writers {
            let _ = write_message(w, &Message::Shutdown);
        }
    }
}
