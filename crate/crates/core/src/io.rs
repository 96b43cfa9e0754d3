//! Dataset input/output: CSV text and a little-endian binary tensor format.
//!
//! Binary tensor layout:
//!
//! ```text
//! magic   4 bytes  "SNFT"
//! version u32 LE   1
//! rows    u64 LE
//! cols    u64 LE
//! payload rows × cols f64 LE, row-major
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SinfError};
use crate::preprocess::Preprocess;

pub const TENSOR_MAGIC: &[u8; 4] = b"SNFT";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.csv` and `.txt` are text; anything else is sniffed by magic bytes.
    pub fn detect(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => return Ok(DataFormat::Csv),
            _ => {}
        }
        let mut head = [0u8; 4];
        let mut f = fs::File::open(path)?;
        let got = f.read(&mut head)?;
        if got == 4 && &head == TENSOR_MAGIC {
            Ok(DataFormat::Binary)
        } else {
            Ok(DataFormat::Csv)
        }
    }
}

/// Parses comma-separated numbers. The first line may be a header; blank
/// lines are skipped. The decimal separator is always '.'.
pub fn parse_csv(reader: impl BufRead) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if rows == 0 && cols.is_none() => {
                // Header row.
                cols = Some(fields.len());
                continue;
            }
            Err(e) => {
                return Err(SinfError::Parse {
                    line: line_no,
                    message: format!("not a number: {e}"),
                })
            }
        };
        match cols {
            Some(c) if c != row.len() => {
                return Err(SinfError::Parse {
                    line: line_no,
                    message: format!("expected {c} fields, found {}", row.len()),
                })
            }
            _ => cols = Some(row.len()),
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(SinfError::Format("no numeric rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_csv(mut w: impl Write, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    if let Some(h) = header {
        writeln!(w, "{}", h.join(","))?;
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn encode_tensor(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for v in m.row(i).iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 24 || &bytes[..4] != TENSOR_MAGIC {
        return Err(SinfError::Format("not a tensor file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(SinfError::Version {
            found: version,
            expected: TENSOR_VERSION,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| SinfError::Format("tensor shape overflows".into()))?;
    let payload = &bytes[24..];
    if payload.len() != expected {
        return Err(SinfError::Format(format!(
            "payload is {} bytes, expected {expected} for {rows}x{cols}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix(path: &Path, format: Option<DataFormat>) -> Result<DMatrix<f64>> {
    let format = match format {
        Some(f) => f,
        None => DataFormat::detect(path)?,
    };
    match format {
        DataFormat::Csv => parse_csv(BufReader::new(fs::File::open(path)?)),
        DataFormat::Binary => decode_tensor(&fs::read(path)?),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Csv => {
            let mut f = std::io::BufWriter::new(fs::File::create(path)?);
            write_csv(&mut f, m, None)?;
            f.flush()?;
        }
        DataFormat::Binary => fs::write(path, encode_tensor(m))?,
    }
    Ok(())
}

/// Raw data plus the preprocessing that the model should apply to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raw: DMatrix<f64>,
    pub preprocess: Preprocess,
}

impl Dataset {
    /// The data in model space (after preprocessing).
    pub fn preprocessed(&self) -> Result<DMatrix<f64>> {
        if self.preprocess == Preprocess::Identity {
            return Ok(self.raw.clone());
        }
        let mut out = self.raw.clone();
        for v in out.iter_mut() {
            *v = self.preprocess.forward(*v)?.0;
        }
        Ok(out)
    }
}

pub fn load_dataset(
    path: &Path,
    format: Option<DataFormat>,
    preprocess: Preprocess,
) -> Result<Dataset> {
    let raw = read_matrix(path, format)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(SinfError::InvalidData(format!(
            "{} contains non-finite values",
            path.display()
        )));
    }
    let ds = Dataset { raw, preprocess };
    // Fail early on out-of-range values.
    if preprocess != Preprocess::Identity {
        for v in ds.raw.iter() {
            preprocess.forward(*v)?;
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header() {
        let m = parse_csv("a,b\n1.0,2.0\n".as_bytes()).unwrap();
        assert_eq!(m.shape(), (1, 2));
        assert_eq!(m[(0, 1)], 2.0);
        let m = parse_csv("1,2\n\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m.shape(), (2, 2));
    }

    #[test]
    fn ragged_csv_reports_line() {
        let err = parse_csv("1,2\n3,4\n5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SinfError::Parse { line: 3, .. }), "{err}");
        let err = parse_csv("x,y\n1,oops\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SinfError::Parse { line: 2, .. }));
    }

    #[test]
    fn tensor_roundtrip_is_bit_identical() {
        let m = DMatrix::from_fn(7, 3, |i, j| (i as f64 * 0.1 + j as f64).sin() / 3.0);
        let back = decode_tensor(&encode_tensor(&m)).unwrap();
        assert!(m
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.shape(), (7, 3));
    }

    #[test]
    fn tensor_rejects_truncation_and_bad_magic() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let bytes = encode_tensor(&m);
        assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_tensor(&bad).is_err());
    }
}
