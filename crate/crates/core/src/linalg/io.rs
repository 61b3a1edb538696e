//! On-disk matrix formats.
//!
//! `FDRM` binary layout (little-endian):
//!
//! ```text
//! b"FDRM" | u32 version = 1 | u64 rows | u64 cols | rows*cols f64, row-major
//! ```
//!
//! Small matrices can also be exchanged as header-less comma-separated text.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseMatrix;
use crate::error::{FdError, Result};

pub const FDRM_MAGIC: &[u8; 4] = b"FDRM";
pub const FDRM_VERSION: u32 = 1;

fn bad(reason: impl Into<String>) -> FdError {
    FdError::Format {
        format: "FDRM",
        reason: reason.into(),
    }
}

pub fn write_fdrm<W: Write>(m: &DenseMatrix, mut w: W) -> Result<()> {
    w.write_all(FDRM_MAGIC)?;
    w.write_all(&FDRM_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fdrm<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != FDRM_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FDRM_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseMatrix::from_row_major(rows, cols, data)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
    Ok(u64::from_le_bytes(b))
}

pub fn save_fdrm(m: &DenseMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| FdError::io(path, e))?;
    write_fdrm(m, BufWriter::new(f))
}

pub fn load_fdrm(path: &Path) -> Result<DenseMatrix> {
    let f = File::open(path).map_err(|e| FdError::io(path, e))?;
    read_fdrm(BufReader::new(f))
}

/// Writes the matrix as header-less CSV.
pub fn write_csv<W: Write>(m: &DenseMatrix, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads header-less CSV of reals; all rows must have equal length.
pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| FdError::Format {
                    format: "CSV",
                    reason: format!("line {}: {s:?}: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

fn csv_err(e: csv::Error) -> FdError {
    FdError::Format {
        format: "CSV",
        reason: e.to_string(),
    }
}
