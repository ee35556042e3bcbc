//! Matrix Market reader and writer.
//!
//! Supports the `real` field with `general` or `symmetric` storage, in both
//! `coordinate` and `array` formats. Input is consumed one line at a time.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{CsrMatrix, DenseMatrix, DenseVector};

/// Largest row or column count accepted from a header. Guards the
/// `nrows + 1` row pointer allocation against hostile size lines.
pub const MAX_DIMENSION: usize = 1 << 26;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed header token `{token}`: {reason}")]
    Header { line: usize, token: String, reason: &'static str },
    #[error("unsupported field `{0}` (only `real` is accepted)")]
    UnsupportedField(String),
    #[error("unsupported symmetry `{0}` (only `general` and `symmetric` are accepted)")]
    UnsupportedSymmetry(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: index ({row}, {col}) outside declared {nrows}x{ncols}")]
    Bounds { line: usize, row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("expected {expected} entries, found {found}")]
    EntryCount { expected: usize, found: usize },
    #[error("expected a single-column matrix for a vector, found {nrows}x{ncols}")]
    NotAVector { nrows: usize, ncols: usize },
}

/// Parsed Matrix Market content.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixMarket {
    /// Coordinate input.
    Sparse(CsrMatrix),
    /// Array input with one column.
    Vector(DenseVector),
    /// Array input with more than one column.
    Dense(DenseMatrix),
}

impl MatrixMarket {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixMarket::Sparse(m) => (m.nrows(), m.ncols()),
            MatrixMarket::Vector(v) => (v.len(), 1),
            MatrixMarket::Dense(m) => (m.nrows(), m.ncols()),
        }
    }

    /// Coefficient-matrix view; dense arrays are converted to CSR.
    pub fn into_csr(self) -> CsrMatrix {
        match self {
            MatrixMarket::Sparse(m) => m,
            MatrixMarket::Vector(v) => {
                let n = v.len();
                CsrMatrix::from_triplets(n, 1, v.iter().enumerate().map(|(i, &x)| (i, 0, x)).collect())
            }
            MatrixMarket::Dense(d) => {
                let mut t = Vec::new();
                for i in 0..d.nrows() {
                    for (j, &v) in d.row(i).iter().enumerate() {
                        if v != 0.0 {
                            t.push((i, j, v));
                        }
                    }
                }
                CsrMatrix::from_triplets(d.nrows(), d.ncols(), t)
            }
        }
    }

    /// Right-hand-side view; accepts array or single-column coordinate input.
    pub fn into_vector(self) -> Result<DenseVector, MmError> {
        match self {
            MatrixMarket::Vector(v) => Ok(v),
            MatrixMarket::Sparse(m) if m.ncols() == 1 => {
                let mut v = DenseVector::zeros(m.nrows());
                for (i, _, x) in m.triplets() {
                    v[i] = x;
                }
                Ok(v)
            }
            other => {
                let (nrows, ncols) = other.shape();
                Err(MmError::NotAVector { nrows, ncols })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy)]
struct Header {
    format: Format,
    symmetric: bool,
}

pub fn parse_matrix_market(bytes: &[u8]) -> Result<MatrixMarket, MmError> {
    read_matrix_market(bytes)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<MatrixMarket, MmError> {
    read_matrix_market(BufReader::new(File::open(path)?))
}

/// Line reader that tracks 1-based line numbers.
struct Lines<R> {
    inner: R,
    buf: Vec<u8>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next line with trailing whitespace trimmed, or `None` at EOF.
    fn next_line(&mut self) -> Result<Option<&str>, MmError> {
        self.buf.clear();
        if self.inner.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        let s = std::str::from_utf8(&self.buf)
            .map_err(|_| MmError::Syntax { line: self.line, msg: "invalid UTF-8".into() })?;
        Ok(Some(s.trim_end()))
    }

    /// Next line that is neither blank nor a `%` comment.
    fn next_data_line(&mut self) -> Result<Option<(usize, String)>, MmError> {
        loop {
            let line = self.line + 1;
            match self.next_line()? {
                None => return Ok(None),
                Some(s) => {
                    let t = s.trim_start();
                    if t.is_empty() || t.starts_with('%') {
                        continue;
                    }
                    return Ok(Some((line, t.to_owned())));
                }
            }
        }
    }
}

pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<MatrixMarket, MmError> {
    let mut lines = Lines { inner: reader, buf: Vec::new(), line: 0 };
    let header = match lines.next_line()? {
        Some(s) => parse_header(s)?,
        None => {
            return Err(MmError::Header { line: 1, token: String::new(), reason: "empty input" });
        }
    };

    let (size_line_no, size_line) =
        lines.next_data_line()?.ok_or_else(|| MmError::Syntax { line: lines.line, msg: "missing size line".into() })?;
    let sizes: Vec<&str> = size_line.split_whitespace().collect();
    let expected_fields = if header.format == Format::Coordinate { 3 } else { 2 };
    if sizes.len() != expected_fields {
        return Err(MmError::Syntax {
            line: size_line_no,
            msg: format!("size line needs {expected_fields} integers, found `{size_line}`"),
        });
    }
    let mut dims = [0usize; 3];
    for (d, tok) in dims.iter_mut().zip(&sizes) {
        *d = parse_index(tok, size_line_no)?;
    }
    let (nrows, ncols) = (dims[0], dims[1]);
    if nrows > MAX_DIMENSION || ncols > MAX_DIMENSION {
        return Err(MmError::Syntax {
            line: size_line_no,
            msg: format!("dimension {nrows}x{ncols} exceeds limit {MAX_DIMENSION}"),
        });
    }
    if header.symmetric && nrows != ncols {
        return Err(MmError::Syntax {
            line: size_line_no,
            msg: format!("symmetric storage requires a square matrix, found {nrows}x{ncols}"),
        });
    }

    match header.format {
        Format::Coordinate => read_coordinate(&mut lines, header, nrows, ncols, dims[2]),
        Format::Array => read_array(&mut lines, header, nrows, ncols),
    }
}

fn parse_header(line: &str) -> Result<Header, MmError> {
    let mut tokens = line.split_whitespace();
    let mut next =
        |reason: &'static str| tokens.next().ok_or(MmError::Header { line: 1, token: "<missing>".into(), reason });
    let banner = next("missing banner")?;
    if banner != "%%MatrixMarket" {
        return Err(MmError::Header { line: 1, token: banner.into(), reason: "expected `%%MatrixMarket`" });
    }
    let object = next("missing object")?;
    if !object.eq_ignore_ascii_case("matrix") {
        return Err(MmError::Header { line: 1, token: object.into(), reason: "expected object `matrix`" });
    }
    let format = next("missing format")?;
    let format = match format.to_ascii_lowercase().as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        _ => return Err(MmError::Header { line: 1, token: format.into(), reason: "expected `coordinate` or `array`" }),
    };
    let field = next("missing field")?;
    match field.to_ascii_lowercase().as_str() {
        "real" | "double" => {}
        "complex" | "pattern" | "integer" => return Err(MmError::UnsupportedField(field.into())),
        _ => return Err(MmError::Header { line: 1, token: field.into(), reason: "unknown field" }),
    }
    let symmetry = next("missing symmetry")?;
    let symmetric = match symmetry.to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        "hermitian" | "skew-symmetric" => return Err(MmError::UnsupportedSymmetry(symmetry.into())),
        _ => return Err(MmError::Header { line: 1, token: symmetry.into(), reason: "unknown symmetry" }),
    };
    if let Some(extra) = tokens.next() {
        return Err(MmError::Header { line: 1, token: extra.into(), reason: "unexpected trailing token" });
    }
    Ok(Header { format, symmetric })
}

fn parse_index(tok: &str, line: usize) -> Result<usize, MmError> {
    tok.parse::<usize>()
        .map_err(|_| MmError::Syntax { line, msg: format!("expected a non-negative integer, found `{tok}`") })
}

fn parse_real(tok: &str, line: usize) -> Result<f64, MmError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(MmError::Syntax { line, msg: format!("non-finite value `{tok}`") }),
        Err(_) => Err(MmError::Syntax { line, msg: format!("expected a real value, found `{tok}`") }),
    }
}

fn read_coordinate<R: BufRead>(
    lines: &mut Lines<R>,
    header: Header,
    nrows: usize,
    ncols: usize,
    nnz: usize,
) -> Result<MatrixMarket, MmError> {
    let mut triplets = Vec::with_capacity(nnz.min(1 << 20));
    let mut found = 0usize;
    while let Some((line, text)) = lines.next_data_line()? {
        if found == nnz {
            return Err(MmError::EntryCount { expected: nnz, found: nnz + 1 });
        }
        let mut toks = text.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (toks.next(), toks.next(), toks.next(), toks.next()) else {
            return Err(MmError::Syntax { line, msg: format!("expected `row col value`, found `{text}`") });
        };
        let (i, j, v) = (parse_index(i, line)?, parse_index(j, line)?, parse_real(v, line)?);
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(MmError::Bounds { line, row: i, col: j, nrows, ncols });
        }
        triplets.push((i - 1, j - 1, v));
        if header.symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        found += 1;
    }
    if found != nnz {
        return Err(MmError::EntryCount { expected: nnz, found });
    }
    Ok(MatrixMarket::Sparse(CsrMatrix::from_triplets(nrows, ncols, triplets)))
}

fn read_array<R: BufRead>(
    lines: &mut Lines<R>,
    header: Header,
    nrows: usize,
    ncols: usize,
) -> Result<MatrixMarket, MmError> {
    let expected =
        if header.symmetric { nrows.checked_mul(nrows + 1).map(|v| v / 2) } else { nrows.checked_mul(ncols) }
            .ok_or_else(|| MmError::Syntax { line: lines.line, msg: "array size overflows".into() })?;

    // column-major as stored
    let mut stored = Vec::with_capacity(expected.min(1 << 20));
    while let Some((line, text)) = lines.next_data_line()? {
        for tok in text.split_whitespace() {
            if stored.len() == expected {
                return Err(MmError::EntryCount { expected, found: expected + 1 });
            }
            stored.push(parse_real(tok, line)?);
        }
    }
    if stored.len() != expected {
        return Err(MmError::EntryCount { expected, found: stored.len() });
    }

    if ncols == 1 && !header.symmetric {
        return Ok(MatrixMarket::Vector(DenseVector(stored)));
    }
    let mut dense = DenseMatrix::zeros(nrows, ncols);
    if header.symmetric {
        let mut it = stored.into_iter();
        for j in 0..ncols {
            for i in j..nrows {
                let v = it.next().expect("counted above");
                dense.set(i, j, v);
                dense.set(j, i, v);
            }
        }
    } else {
        for (k, v) in stored.into_iter().enumerate() {
            dense.set(k % nrows, k / nrows, v);
        }
    }
    if ncols == 1 {
        return Ok(MatrixMarket::Vector(DenseVector(dense.into_vec())));
    }
    Ok(MatrixMarket::Dense(dense))
}

/// Shortest exact text for an `f64`: 17 significant digits.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csr<W: Write>(m: &CsrMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {}", i + 1, j + 1, fmt_real(v))?;
    }
    Ok(())
}

pub fn write_vector<W: Write>(v: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{}", fmt_real(*x))?;
    }
    Ok(())
}

pub fn write_dense<W: Write>(m: &DenseMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            writeln!(w, "{}", fmt_real(m.get(i, j)))?;
        }
    }
    Ok(())
}

/// Serializes to Matrix Market text. Values round-trip exactly through
/// [`parse_matrix_market`].
pub fn write_matrix_market(m: &MatrixMarket) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        MatrixMarket::Sparse(c) => write_csr(c, &mut out),
        MatrixMarket::Vector(v) => write_vector(v, &mut out),
        MatrixMarket::Dense(d) => write_dense(d, &mut out),
    }
    .expect("writing to a Vec cannot fail");
    out
}
