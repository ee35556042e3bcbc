//! Wire format between the scheduler and workers.
//!
//! A frame is a 32-bit big-endian length, a one-byte tag, and a payload;
//! the length counts the tag plus the payload. Inside payloads every
//! integer is a 32-bit little-endian value and every real a 64-bit
//! little-endian IEEE double. Arrays carry their dimensions first.
//!
//! | tag    | message            | payload                                              |
//! |--------|--------------------|------------------------------------------------------|
//! | `0x01` | `ASSIGN_PARTITION` | index, mode byte, gamma, source byte, block          |
//! | `0x02` | `INIT_RESULT`      | index, `x_j(0)`, `max |P_j|`                         |
//! | `0x03` | `BROADCAST_XBAR`   | epoch, `x̄(t)`                                        |
//! | `0x04` | `UPDATE_RESULT`    | epoch, `x_j(t+1)`                                    |
//! | `0x05` | `SHUTDOWN`         | empty                                                |
//! | `0x7F` | `ERROR`            | code string, message string                          |
//!
//! The block of an assignment is either inline (source byte 0: rows, cols,
//! row-major values, then the right-hand side) or a reference to shared
//! Matrix Market files (source byte 1: matrix path, rhs path, row start,
//! row end). Strings are a length followed by UTF-8 bytes.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::apc::Mode;
use crate::matrix::{DenseMatrix, DenseVector};

/// Largest accepted value of the length prefix.
pub const MAX_FRAME_LEN: u32 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    AssignPartition = 0x01,
    InitResult = 0x02,
    BroadcastXbar = 0x03,
    UpdateResult = 0x04,
    Shutdown = 0x05,
    Error = 0x7F,
}

impl Tag {
    pub fn from_byte(b: u8) -> Option<Tag> {
        Some(match b {
            0x01 => Tag::AssignPartition,
            0x02 => Tag::InitResult,
            0x03 => Tag::BroadcastXbar,
            0x04 => Tag::UpdateResult,
            0x05 => Tag::Shutdown,
            0x7F => Tag::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockSource {
    Inline {
        a: DenseMatrix,
        b: DenseVector,
    },
    /// Rows `[row_start, row_end)` of Matrix Market files readable by the worker.
    Shared {
        matrix_path: String,
        rhs_path: String,
        row_start: u32,
        row_end: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub index: u32,
    /// `Decomposed` or `Classical`.
    pub mode: Mode,
    pub gamma: f64,
    pub source: BlockSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    AssignPartition(Assignment),
    InitResult { index: u32, estimate: DenseVector, projection_norm: f64 },
    BroadcastXbar { epoch: u32, x_bar: DenseVector },
    UpdateResult { epoch: u32, estimate: DenseVector },
    Shutdown,
    Error { code: String, message: String },
}

impl Message {
    pub fn tag(&self) -> Tag {
        match self {
            Message::AssignPartition(_) => Tag::AssignPartition,
            Message::InitResult { .. } => Tag::InitResult,
            Message::BroadcastXbar { .. } => Tag::BroadcastXbar,
            Message::UpdateResult { .. } => Tag::UpdateResult,
            Message::Shutdown => Tag::Shutdown,
            Message::Error { .. } => Tag::Error,
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Message {
        Message::Error { code: code.to_owned(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("zero frame length (a frame holds at least its tag)")]
    ZeroLength,
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN}-byte limit")]
    LengthOverflow(u32),
    #[error("unknown tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("bad {tag:?} payload: {detail}")]
    Payload { tag: Tag, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// The buffer holds a valid prefix; at least `needed` more bytes are required.
    #[error("incomplete frame, {needed} more bytes needed")]
    NeedMore { needed: usize },
    #[error("malformed frame: {0}")]
    Malformed(#[from] FrameError),
}

const MODE_DECOMPOSED: u8 = 0;
const MODE_CLASSICAL: u8 = 1;
const SOURCE_INLINE: u8 = 0;
const SOURCE_SHARED: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    put_u32(out, u32::try_from(n).expect("dimension exceeds 32 bits"));
}

fn put_vector(out: &mut Vec<u8>, v: &[f64]) {
    put_len(out, v.len());
    for &x in v {
        put_f64(out, x);
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_len(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn encode_payload(msg: &Message, out: &mut Vec<u8>) {
    match msg {
        Message::AssignPartition(a) => {
            put_u32(out, a.index);
            out.push(match a.mode {
                Mode::Classical => MODE_CLASSICAL,
                _ => MODE_DECOMPOSED,
            });
            put_f64(out, a.gamma);
            match &a.source {
                BlockSource::Inline { a, b } => {
                    out.push(SOURCE_INLINE);
                    put_len(out, a.nrows());
                    put_len(out, a.ncols());
                    for &x in a.as_slice() {
                        put_f64(out, x);
                    }
                    put_vector(out, b);
                }
                BlockSource::Shared { matrix_path, rhs_path, row_start, row_end } => {
                    out.push(SOURCE_SHARED);
                    put_str(out, matrix_path);
                    put_str(out, rhs_path);
                    put_u32(out, *row_start);
                    put_u32(out, *row_end);
                }
            }
        }
        Message::InitResult { index, estimate, projection_norm } => {
            put_u32(out, *index);
            put_vector(out, estimate);
            put_f64(out, *projection_norm);
        }
        Message::BroadcastXbar { epoch, x_bar: v } | Message::UpdateResult { epoch, estimate: v } => {
            put_u32(out, *epoch);
            put_vector(out, v);
        }
        Message::Shutdown => {}
        Message::Error { code, message } => {
            put_str(out, code);
            put_str(out, message);
        }
    }
}

/// Serializes one message as a complete frame.
pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut out = vec![0u8; 4];
    out.push(msg.tag() as u8);
    encode_payload(msg, &mut out);
    let len = u32::try_from(out.len() - 4).expect("frame exceeds 32 bits");
    out[..4].copy_from_slice(&len.to_be_bytes());
    out
}

struct PayloadReader<'a> {
    tag: Tag,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    fn fail(&self, detail: impl Into<String>) -> FrameError {
        FrameError::Payload { tag: self.tag, detail: detail.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FrameError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(self.fail(format!("{what} needs {n} bytes, {remaining} left")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, FrameError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, FrameError> {
        let v = f64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(self.fail(format!("{what} is not finite")));
        }
        Ok(v)
    }

    /// `count` reals, checking the byte budget before allocating.
    fn reals(&mut self, count: usize, what: &str) -> Result<Vec<f64>, FrameError> {
        let bytes = count.checked_mul(8).ok_or_else(|| self.fail(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.fail(format!("{what} holds a non-finite value")));
        }
        Ok(vals)
    }

    fn vector(&mut self, what: &str) -> Result<DenseVector, FrameError> {
        let n = self.u32(what)? as usize;
        Ok(DenseVector(self.reals(n, what)?))
    }

    fn string(&mut self, what: &str) -> Result<String, FrameError> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.fail(format!("{what} is not UTF-8")))
    }

    fn finish(self) -> Result<(), FrameError> {
        if self.pos != self.buf.len() {
            return Err(self.fail(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn decode_payload(tag: Tag, payload: &[u8]) -> Result<Message, FrameError> {
    let mut r = PayloadReader { tag, buf: payload, pos: 0 };
    let msg = match tag {
        Tag::AssignPartition => {
            let index = r.u32("partition index")?;
            let mode = match r.u8("mode")? {
                MODE_DECOMPOSED => Mode::Decomposed,
                MODE_CLASSICAL => Mode::Classical,
                other => return Err(r.fail(format!("unknown mode byte {other}"))),
            };
            let gamma = r.f64("gamma")?;
            let source = match r.u8("source kind")? {
                SOURCE_INLINE => {
                    let rows = r.u32("block rows")? as usize;
                    let cols = r.u32("block columns")? as usize;
                    let count = rows.checked_mul(cols).ok_or_else(|| r.fail("block size overflows"))?;
                    let data = r.reals(count, "block values")?;
                    let a = DenseMatrix::new(rows, cols, data).map_err(|e| r.fail(e.to_string()))?;
                    let b = r.vector("block rhs")?;
                    if b.len() != rows {
                        return Err(r.fail(format!("rhs has {} entries for {rows} rows", b.len())));
                    }
                    BlockSource::Inline { a, b }
                }
                SOURCE_SHARED => {
                    let matrix_path = r.string("matrix path")?;
                    let rhs_path = r.string("rhs path")?;
                    let row_start = r.u32("row start")?;
                    let row_end = r.u32("row end")?;
                    if row_start >= row_end {
                        return Err(r.fail(format!("empty row range [{row_start}, {row_end})")));
                    }
                    BlockSource::Shared { matrix_path, rhs_path, row_start, row_end }
                }
                other => return Err(r.fail(format!("unknown source kind {other}"))),
            };
            Message::AssignPartition(Assignment { index, mode, gamma, source })
        }
        Tag::InitResult => {
            let index = r.u32("partition index")?;
            let estimate = r.vector("initial estimate")?;
            let projection_norm = r.f64("projection norm")?;
            Message::InitResult { index, estimate, projection_norm }
        }
        Tag::BroadcastXbar => {
            let epoch = r.u32("epoch")?;
            Message::BroadcastXbar { epoch, x_bar: r.vector("average")? }
        }
        Tag::UpdateResult => {
            let epoch = r.u32("epoch")?;
            Message::UpdateResult { epoch, estimate: r.vector("estimate")? }
        }
        Tag::Shutdown => Message::Shutdown,
        Tag::Error => {
            let code = r.string("error code")?;
            let message = r.string("error message")?;
            Message::Error { code, message }
        }
    };
    r.finish()?;
    Ok(msg)
}

/// Checks a length prefix, returning the frame body size.
fn frame_len(prefix: [u8; 4]) -> Result<usize, FrameError> {
    let len = u32::from_be_bytes(prefix);
    if len == 0 {
        return Err(FrameError::ZeroLength);
    }
    if len > MAX_FRAME_LEN {
        return Err(FrameError::LengthOverflow(len));
    }
    Ok(len as usize)
}

fn decode_body(body: &[u8]) -> Result<Message, FrameError> {
    let tag = Tag::from_byte(body[0]).ok_or(FrameError::UnknownTag(body[0]))?;
    decode_payload(tag, &body[1..])
}

/// Decodes the first frame in `buf`, returning it with the bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(Message, usize), DecodeError> {
    if buf.len() < 4 {
        return Err(DecodeError::NeedMore { needed: 4 - buf.len() });
    }
    let len = frame_len(buf[..4].try_into().unwrap())?;
    // unknown tags are rejected as soon as the tag byte is visible
    if buf.len() > 4 && Tag::from_byte(buf[4]).is_none() {
        return Err(FrameError::UnknownTag(buf[4]).into());
    }
    let total = 4 + len;
    if buf.len() < total {
        return Err(DecodeError::NeedMore { needed: total - buf.len() });
    }
    Ok((decode_body(&buf[4..total])?, total))
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads one frame. `Ok(None)` means the peer closed the stream between frames.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, StreamError> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = frame_len(prefix)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let tag = Tag::from_byte(tag[0]).ok_or(FrameError::UnknownTag(tag[0]))?;
    let mut payload = vec![0u8; len - 1];
    r.read_exact(&mut payload)?;
    Ok(Some(decode_payload(tag, &payload)?))
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&encode_frame(msg))?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(msg: Message) {
        let bytes = encode_frame(&msg);
        let (back, used) = decode_frame(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, msg);
        let mut cursor = io::Cursor::new(bytes);
        assert_eq!(read_message(&mut cursor).unwrap(), Some(msg));
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }

    #[test]
    fn shutdown_is_five_bytes() {
        assert_eq!(encode_frame(&Message::Shutdown), vec![0, 0, 0, 1, 5]);
    }

    #[test]
    fn broadcast_layout() {
        let bytes = encode_frame(&Message::BroadcastXbar { epoch: 0, x_bar: DenseVector(vec![1.0]) });
        let mut expected = vec![0, 0, 0, 17, 0x03, 0, 0, 0, 0, 1, 0, 0, 0];
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(bytes, expected);
        round_trip(Message::BroadcastXbar { epoch: 0, x_bar: DenseVector(vec![1.0]) });
    }

    #[test]
    fn every_message_round_trips() {
        round_trip(Message::AssignPartition(Assignment {
            index: 3,
            mode: Mode::Classical,
            gamma: 0.9,
            source: BlockSource::Inline {
                a: DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, -0.0]]),
                b: DenseVector(vec![1.0, 2.0, 3.0]),
            },
        }));
        round_trip(Message::AssignPartition(Assignment {
            index: 0,
            mode: Mode::Decomposed,
            gamma: 0.5,
            source: BlockSource::Shared {
                matrix_path: "/data/a.mtx".into(),
                rhs_path: "/data/b.mtx".into(),
                row_start: 10,
                row_end: 20,
            },
        }));
        round_trip(Message::InitResult { index: 1, estimate: DenseVector(vec![3.0, 4.0]), projection_norm: 1e-16 });
        round_trip(Message::UpdateResult { epoch: 7, estimate: DenseVector(vec![]) });
        round_trip(Message::Shutdown);
        round_trip(Message::error("protocol-order", "broadcast before assignment"));
    }

    #[test]
    fn truncation_is_need_more() {
        let bytes = encode_frame(&Message::BroadcastXbar { epoch: 2, x_bar: DenseVector(vec![1.0, 2.0]) });
        for cut in 0..bytes.len() {
            match decode_frame(&bytes[..cut]) {
                Err(DecodeError::NeedMore { needed }) => assert!(needed > 0 && cut + needed <= bytes.len()),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(decode_frame(&[0, 0, 0, 0]), Err(FrameError::ZeroLength.into()));
        assert_eq!(decode_frame(&[0x80, 0, 0, 1]), Err(FrameError::LengthOverflow(0x8000_0001).into()));
        assert_eq!(decode_frame(&[0, 0, 0, 1, 0x42]), Err(FrameError::UnknownTag(0x42).into()));
        // shutdown with a stray payload byte
        assert!(matches!(decode_frame(&[0, 0, 0, 2, 5, 0]), Err(DecodeError::Malformed(FrameError::Payload { .. }))));
        // vector claims two entries but carries one
        let mut b = vec![0, 0, 0, 17, 0x03, 0, 0, 0, 0, 2, 0, 0, 0];
        b.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(decode_frame(&b), Err(DecodeError::Malformed(FrameError::Payload { .. }))));
        // NaN payload
        let mut b = vec![0, 0, 0, 17, 0x04, 0, 0, 0, 0, 1, 0, 0, 0];
        b.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_frame(&b), Err(DecodeError::Malformed(_))));
    }

    #[test]
    fn huge_declared_dimensions_do_not_allocate() {
        let mut b = vec![0, 0, 0, 0, 0x01];
        b.extend_from_slice(&0u32.to_le_bytes());
        b.push(0);
        b.extend_from_slice(&0.5f64.to_le_bytes());
        b.push(0);
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        let len = (b.len() - 4) as u32;
        b[..4].copy_from_slice(&len.to_be_bytes());
        assert!(matches!(decode_frame(&b), Err(DecodeError::Malformed(FrameError::Payload { .. }))));
    }

    #[test]
    fn mid_frame_eof_is_an_error() {
        let bytes = encode_frame(&Message::Shutdown);
        let mut cursor = io::Cursor::new(&bytes[..3]);
        assert!(matches!(read_message(&mut cursor), Err(StreamError::Io(_))));
    }
}
