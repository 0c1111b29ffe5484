//! On-disk encodings for logit and covariance matrices.
//!
//! Both binary formats are little-endian with a four-byte magic and a `u32`
//! version, followed by fixed-width header fields and `f64` payloads.
//!
//! ```text
//! logit file (NDLM)
//!   0   magic  "NDLM"
//!   4   u32    version (1)
//!   8   u64    N, samples
//!   16  u64    n, categories
//!   24  u32    flags: bit 0 labels present, bit 1 names present
//!   28  f64    N·n logits, row-major
//!       u32    N labels            (if bit 0)
//!       names  n × (u32 byte length, UTF-8 bytes)   (if bit 1)
//!
//! covariance file (NDCV)
//!   0   magic  "NDCV"
//!   4   u32    version (1)
//!   8   u64    n
//!   16  u64    sample count
//!   24  f64    n(n+1)/2 upper-triangle entries, row by row, diagonal first
//! ```
//!
//! The total length is determined by the header; trailing bytes are an
//! error. Every parse error carries the byte offset (binary) or line number
//! (CSV) where decoding failed.

use std::fs;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::covariance::{CovMatrix, LogitMatrix};
use crate::linalg::SymmetricMatrix;
use crate::scalar::Scalar;

pub const LOGIT_MAGIC: &[u8; 4] = b"NDLM";
pub const COV_MAGIC: &[u8; 4] = b"NDCV";
pub const VERSION: u32 = 1;

const FLAG_LABELS: u32 = 1;
const FLAG_NAMES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("unexpected end of input at byte {offset}: {what} needs {needed} bytes, {available} available")]
    UnexpectedEnd {
        offset: usize,
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("bad magic at byte 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {version} at byte 4")]
    UnsupportedVersion { version: u32 },
    #[error("{count} trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("invalid {what} at byte {offset}: {reason}")]
    InvalidValue {
        offset: usize,
        what: &'static str,
        reason: String,
    },
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
}

type FormatResult<T> = std::result::Result<T, FormatError>;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &'static str) -> FormatResult<&'a [u8]> {
        if self.remaining() < len {
            return Err(FormatError::UnexpectedEnd {
                offset: self.pos,
                what,
                needed: len,
                available: self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    /// Fails early when `count` items of `width` bytes cannot fit, so a
    /// corrupt header never triggers a huge allocation.
    fn reserve(&self, count: u64, width: usize, what: &'static str) -> FormatResult<usize> {
        let bytes = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(width))
            .ok_or(FormatError::InvalidValue {
                offset: self.pos,
                what,
                reason: format!("size {count} overflows"),
            })?;
        if bytes > self.remaining() {
            return Err(FormatError::UnexpectedEnd {
                offset: self.pos,
                what,
                needed: bytes,
                available: self.remaining(),
            });
        }
        Ok(bytes / width)
    }

    fn u32(&mut self, what: &'static str) -> FormatResult<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> FormatResult<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize, what: &'static str) -> FormatResult<Vec<f64>> {
        let start = self.pos;
        let bytes = self.take(count * 8, what)?;
        let mut out = Vec::with_capacity(count);
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(FormatError::InvalidValue {
                    offset: start + 8 * k,
                    what,
                    reason: format!("non-finite value {v}"),
                });
            }
            out.push(v);
        }
        Ok(out)
    }

    fn header(&mut self, magic: &[u8; 4]) -> FormatResult<()> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion { version });
        }
        Ok(())
    }

    fn finish(&self) -> FormatResult<()> {
        if self.remaining() > 0 {
            return Err(FormatError::TrailingBytes {
                offset: self.pos,
                count: self.remaining(),
            });
        }
        Ok(())
    }
}

pub fn encode_logits<F: Scalar>(m: &LogitMatrix<F>) -> Vec<u8> {
    let mut flags = 0;
    if m.labels().is_some() {
        flags |= FLAG_LABELS;
    }
    if m.names().is_some() {
        flags |= FLAG_NAMES;
    }
    let mut out = Vec::with_capacity(28 + 8 * m.as_slice().len());
    out.extend_from_slice(LOGIT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    if let Some(labels) = m.labels() {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(names) = m.names() {
        for name in names {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
    }
    out
}

/// Decodes a logit file. Labels are checked only for width, not against
/// `n`, so files whose labels also cover categories absent from the logits
/// can be read.
pub fn decode_logits(bytes: &[u8]) -> FormatResult<LogitMatrix<f64>> {
    let mut c = Cursor::new(bytes);
    c.header(LOGIT_MAGIC)?;
    let rows_at = c.pos;
    let rows = c.u64("sample count")?;
    let cols = c.u64("category count")?;
    let flags_at = c.pos;
    let flags = c.u32("flags")?;
    if flags & !(FLAG_LABELS | FLAG_NAMES) != 0 {
        return Err(FormatError::InvalidValue {
            offset: flags_at,
            what: "flags",
            reason: format!("unknown bits {flags:#x}"),
        });
    }
    if rows == 0 || cols == 0 {
        return Err(FormatError::InvalidValue {
            offset: rows_at,
            what: "shape",
            reason: format!("empty matrix {rows}x{cols}"),
        });
    }
    let total = rows.checked_mul(cols).ok_or(FormatError::InvalidValue {
        offset: rows_at,
        what: "shape",
        reason: format!("{rows}x{cols} overflows"),
    })?;
    let count = c.reserve(total, 8, "logits")?;
    let data = c.f64s(count, "logits")?;
    let (rows, cols) = (rows as usize, cols as usize);

    let labels = if flags & FLAG_LABELS != 0 {
        let count = c.reserve(rows as u64, 4, "labels")?;
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            labels.push(c.u32("label")?);
        }
        Some(labels)
    } else {
        None
    };

    let names = if flags & FLAG_NAMES != 0 {
        let mut names = Vec::with_capacity(cols.min(c.remaining() / 4));
        for _ in 0..cols {
            let len = c.u32("name length")? as usize;
            let at = c.pos;
            let raw = c.take(len, "name")?;
            let s = std::str::from_utf8(raw).map_err(|e| FormatError::InvalidValue {
                offset: at + e.valid_up_to(),
                what: "name",
                reason: "invalid UTF-8".into(),
            })?;
            names.push(s.to_owned());
        }
        Some(names)
    } else {
        None
    };
    c.finish()?;

    let invalid = |reason: String| FormatError::InvalidValue {
        offset: rows_at,
        what: "logit matrix",
        reason,
    };
    let mut m = LogitMatrix::new(rows, cols, data).map_err(|e| invalid(e.to_string()))?;
    if let Some(labels) = labels {
        m = m
            .with_extended_labels(labels, u32::MAX as usize + 1)
            .map_err(|e| invalid(e.to_string()))?;
    }
    if let Some(names) = names {
        m = m.with_names(names).map_err(|e| invalid(e.to_string()))?;
    }
    Ok(m)
}

pub fn encode_cov<F: Scalar>(c: &CovMatrix<F>) -> Vec<u8> {
    let n = c.dim();
    let mut out = Vec::with_capacity(24 + 4 * n * (n + 1));
    out.extend_from_slice(COV_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&c.sample_count.to_le_bytes());
    for i in 0..n {
        for j in i..n {
            out.extend_from_slice(&c.get(i, j).as_f64().to_le_bytes());
        }
    }
    out
}

pub fn decode_cov(bytes: &[u8]) -> FormatResult<CovMatrix<f64>> {
    let mut c = Cursor::new(bytes);
    c.header(COV_MAGIC)?;
    let n_at = c.pos;
    let n = c.u64("dimension")?;
    let sample_count = c.u64("sample count")?;
    if n == 0 {
        return Err(FormatError::InvalidValue {
            offset: n_at,
            what: "dimension",
            reason: "zero".into(),
        });
    }
    let entries = n
        .checked_add(1)
        .and_then(|m| m.checked_mul(n))
        .map(|m| m / 2)
        .ok_or(FormatError::InvalidValue {
            offset: n_at,
            what: "dimension",
            reason: format!("{n} overflows"),
        })?;
    let count = c.reserve(entries, 8, "upper triangle")?;
    let upper = c.f64s(count, "upper triangle")?;
    c.finish()?;
    let n = n as usize;
    let mut it = upper.into_iter();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = it.next().expect("length checked");
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    let mat = SymmetricMatrix::new(n, data).map_err(|e| FormatError::InvalidValue {
        offset: n_at,
        what: "covariance",
        reason: e.to_string(),
    })?;
    CovMatrix::new(mat, sample_count).map_err(|e| FormatError::InvalidValue {
        offset: n_at,
        what: "covariance",
        reason: e.to_string(),
    })
}

/// Parses CSV logits. A first record containing any non-numeric field is
/// taken as a header of category names. `labels_col`, if given, selects the
/// column holding integer labels; it is removed from the logits.
pub fn read_csv<R: Read>(reader: R, labels_col: Option<usize>) -> FormatResult<LogitMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names: Option<Vec<String>> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        let err = |reason: String| FormatError::Csv { line, reason };
        if let Some(lc) = labels_col {
            if lc >= rec.len() {
                return Err(err(format!(
                    "labels column {lc} out of range for {} fields",
                    rec.len()
                )));
            }
        }
        let values: Vec<&str> = rec
            .iter()
            .enumerate()
            .filter(|&(c, _)| Some(c) != labels_col)
            .map(|(_, s)| s)
            .collect();
        if k == 0 && values.iter().any(|s| s.parse::<f64>().is_err()) {
            names = Some(values.iter().map(|s| s.to_string()).collect());
            width = Some(values.len());
            continue;
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(err(format!("expected {w} logit fields, found {}", values.len())));
            }
            _ => width = Some(values.len()),
        }
        for (c, s) in values.iter().enumerate() {
            let v: f64 = s
                .parse()
                .map_err(|_| err(format!("field {}: cannot parse {s:?} as a number", c + 1)))?;
            if !v.is_finite() {
                return Err(err(format!("field {}: non-finite value", c + 1)));
            }
            data.push(v);
        }
        if let Some(lc) = labels_col {
            let s = &rec[lc];
            labels.push(
                s.parse::<u32>()
                    .map_err(|_| err(format!("label {s:?} is not a non-negative integer")))?,
            );
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(FormatError::Csv {
            line: 1,
            reason: "no data rows".into(),
        });
    }
    let invalid = |reason: String| FormatError::Csv { line: 1, reason };
    let mut m = LogitMatrix::new(rows, cols, data).map_err(|e| invalid(e.to_string()))?;
    if labels_col.is_some() {
        m = m
            .with_extended_labels(labels, u32::MAX as usize + 1)
            .map_err(|e| invalid(e.to_string()))?;
    }
    if let Some(names) = names {
        m = m.with_names(names).map_err(|e| invalid(e.to_string()))?;
    }
    Ok(m)
}

/// Writes logits as CSV with shortest round-trip number formatting. Labels,
/// if present, become a final `label` column.
pub fn write_csv<F: Scalar>(m: &LogitMatrix<F>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let labels = m.labels();
    if let Some(names) = m.names() {
        let mut header: Vec<String> = names.to_vec();
        if labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).expect("in-memory write");
    }
    for r in 0..m.rows() {
        let mut rec: Vec<String> = m.row(r).iter().map(|v| format!("{:?}", v.as_f64())).collect();
        if let Some(l) = labels {
            rec.push(l[r].to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Loads logits from a binary file, or from CSV when the path ends in
/// `.csv`.
pub fn load_logits(path: &Path, labels_col: Option<usize>) -> crate::Result<LogitMatrix<f64>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        Ok(read_csv(fs::File::open(path)?, labels_col)?)
    } else {
        Ok(decode_logits(&fs::read(path)?)?)
    }
}

pub fn save_logits<F: Scalar>(path: &Path, m: &LogitMatrix<F>) -> crate::Result<()> {
    fs::write(path, encode_logits(m))?;
    Ok(())
}

pub fn load_cov(path: &Path) -> crate::Result<CovMatrix<f64>> {
    Ok(decode_cov(&fs::read(path)?)?)
}

pub fn save_cov<F: Scalar>(path: &Path, c: &CovMatrix<F>) -> crate::Result<()> {
    fs::write(path, encode_cov(c))?;
    Ok(())
}
