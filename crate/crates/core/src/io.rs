//! Feature and label file formats.
//!
//! # CWCF
//!
//! Little-endian binary, 25-byte header followed by the column-major payload:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `b"CWCF"`                        |
//! | 4      | 4    | version, `u32` = 1                     |
//! | 8      | 1    | dtype, `u8`: 1 = `f32`, 2 = `f64`      |
//! | 9      | 8    | rows `u64` (feature dimension `d`)     |
//! | 17     | 8    | cols `u64` (sample count `n`)          |
//! | 25     | …    | `rows · cols` values, column by column |
//!
//! `f32` payloads are widened to `f64` on load.
//!
//! # Text formats
//!
//! Feature CSV holds the matrix as laid out: `d` lines of `n` comma-separated
//! values. Label files hold one integer label per line, or `id,label` pairs
//! whose ids are a permutation of `0..n` (an optional header line is skipped).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::FeatureMatrix;

pub const MAGIC: [u8; 4] = *b"CWCF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 25;

/// Element type of a CWCF payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32 = 1,
    #[default]
    F64 = 2,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// On-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Cwcf,
    Csv,
}

impl FromStr for FeatureFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cwcf" => Ok(FeatureFormat::Cwcf),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(format!("unknown feature format '{other}' (cwcf|csv)")),
        }
    }
}

/// Decoded CWCF header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwcfHeader {
    pub dtype: Dtype,
    pub rows: u64,
    pub cols: u64,
}

impl CwcfHeader {
    fn payload_len(&self) -> Option<u64> {
        self.rows
            .checked_mul(self.cols)?
            .checked_mul(self.dtype.width() as u64)
    }
}

pub fn write_cwcf<W: Write>(m: &FeatureMatrix, dtype: Dtype, mut out: W) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    out.write_all(&MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&[dtype.code()]).map_err(io)?;
    out.write_all(&(m.dim() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&(m.samples() as u64).to_le_bytes()).map_err(io)?;
    for &v in m.as_slice() {
        match dtype {
            Dtype::F32 => out.write_all(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.write_all(&v.to_le_bytes()),
        }
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_fully<R: Read>(input: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn read_cwcf_header<R: Read>(input: &mut R) -> Result<CwcfHeader> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_fully(input, &mut header).map_err(|e| Error::io("<reader>", e))?;
    if got >= 4 && header[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if got < header.len() {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: got as u64,
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = Dtype::from_code(header[8])?;
    let rows = u64::from_le_bytes(header[9..17].try_into().unwrap());
    let cols = u64::from_le_bytes(header[17..25].try_into().unwrap());
    Ok(CwcfHeader { dtype, rows, cols })
}

/// Reads a CWCF stream. `stream_len`, when known, lets an impossible shape be
/// rejected before any payload allocation.
pub fn read_cwcf<R: Read>(mut input: R, stream_len: Option<u64>) -> Result<FeatureMatrix> {
    let header = read_cwcf_header(&mut input)?;
    let overflow = Error::ShapeOverflow {
        rows: header.rows,
        cols: header.cols,
    };
    let payload = header.payload_len().ok_or(overflow)?;
    let count = usize::try_from(header.rows * header.cols).map_err(|_| Error::ShapeOverflow {
        rows: header.rows,
        cols: header.cols,
    })?;
    if let Some(len) = stream_len {
        let expected = HEADER_LEN + payload;
        if len < expected {
            return Err(Error::TruncatedFile {
                expected,
                found: len,
            });
        }
        if len > expected {
            return Err(Error::ShapeOverflow {
                rows: header.rows,
                cols: header.cols,
            });
        }
    }

    let width = header.dtype.width();
    let mut values = Vec::with_capacity(count);
    let mut buf = vec![0u8; 1 << 16];
    let mut remaining = payload as usize;
    while remaining > 0 {
        let want = remaining.min(buf.len());
        let got = read_fully(&mut input, &mut buf[..want]).map_err(|e| Error::io("<reader>", e))?;
        if got < want {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN + payload,
                found: HEADER_LEN + (payload - remaining as u64) + got as u64,
            });
        }
        for bytes in buf[..want].chunks_exact(width) {
            values.push(match header.dtype {
                Dtype::F32 => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
                Dtype::F64 => f64::from_le_bytes(bytes.try_into().unwrap()),
            });
        }
        remaining -= want;
    }
    if stream_len.is_none() {
        let mut probe = [0u8; 1];
        if read_fully(&mut input, &mut probe).map_err(|e| Error::io("<reader>", e))? > 0 {
            return Err(Error::ShapeOverflow {
                rows: header.rows,
                cols: header.cols,
            });
        }
    }
    FeatureMatrix::from_column_major(header.rows as usize, header.cols as usize, values)
}

pub fn write_features(m: &FeatureMatrix, path: &Path, dtype: Dtype) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cwcf(m, dtype, BufWriter::new(file)).map_err(|e| with_path(e, path))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    read_cwcf(BufReader::new(file), Some(len)).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

/// Parses feature CSV (one matrix row per line).
pub fn parse_features_csv(text: &str, path: &Path) -> Result<FeatureMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in csv_reader(text).records().enumerate() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, format!("line {}: bad number '{f}'", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    format!("line {}: {} values, expected {}", line + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let d = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut values = vec![0.0; d * n];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[j * d + i] = v;
        }
    }
    FeatureMatrix::from_column_major(d, n, values)
}

pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_csv(&text, path)
}

pub fn write_features_csv(m: &FeatureMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for i in 0..m.dim() {
        let line: Vec<String> = (0..m.samples()).map(|j| m.column(j)[i].to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_as(path: &Path, format: FeatureFormat) -> Result<FeatureMatrix> {
    match format {
        FeatureFormat::Cwcf => read_features(path),
        FeatureFormat::Csv => read_features_csv(path),
    }
}

/// Parses a label file into external labels, in sample order.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<i64>> {
    let mut plain = Vec::new();
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    for (line, record) in csv_reader(text).records().enumerate() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        let fields: Vec<&str> = record.iter().filter(|f| !f.is_empty()).collect();
        let int = |f: &str| f.parse::<i64>();
        match fields.as_slice() {
            [] => {}
            [label] => plain.push(
                int(label)
                    .map_err(|_| parse_error(path, format!("line {}: bad label '{label}'", line + 1)))?,
            ),
            [id, label] => match (int(id), int(label)) {
                (Ok(id), Ok(label)) => pairs.push((id, label)),
                // Header row.
                _ if line == 0 => {}
                _ => {
                    return Err(parse_error(
                        path,
                        format!("line {}: expected 'id,label' integers", line + 1),
                    ))
                }
            },
            _ => {
                return Err(parse_error(
                    path,
                    format!("line {}: expected 1 or 2 fields", line + 1),
                ))
            }
        }
    }
    if !plain.is_empty() && !pairs.is_empty() {
        return Err(parse_error(path, "mixes single-label and id,label lines"));
    }
    if pairs.is_empty() {
        if plain.is_empty() {
            return Err(Error::EmptyFile);
        }
        return Ok(plain);
    }
    pairs.sort_unstable_by_key(|&(id, _)| id);
    if pairs.iter().enumerate().any(|(k, &(id, _))| id != k as i64) {
        return Err(parse_error(path, "sample ids must be a permutation of 0..n"));
    }
    Ok(pairs.into_iter().map(|(_, label)| label).collect())
}

/// Reads external labels from a file.
pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn write_labels(labels: &[i64], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 4);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
