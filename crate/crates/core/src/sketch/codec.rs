//! `FDSK` sketch serialization.
//!
//! Common header, little-endian:
//!
//! ```text
//! b"FDSK" | u32 version = 1 | u8 kind | u64 ell | u64 d | u64 n_seen | f64 alpha
//! ```
//!
//! For kinds 0 (FD), 1 (RFD) and 2 (iSVD) the body is `sigma` (ell f64),
//! `v_rows` (ell*d f64, row-major) and `c` (d f64). Kinds 3 to 5 carry the
//! baseline sketches; their bodies are written by the baselines module with
//! the same primitives. A sketch with buffered rows cannot be serialized.

use std::io::{Read, Write};

use super::{FdSketch, Variant};
use crate::error::{FdError, Result};
use crate::linalg::DenseMatrix;

pub const FDSK_MAGIC: &[u8; 4] = b"FDSK";
pub const FDSK_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum SketchKind {
    Fd = 0,
    Rfd = 1,
    Isvd = 2,
    TwoLevel = 3,
    RandomProjection = 4,
    CountSketch = 5,
}

impl SketchKind {
    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => SketchKind::Fd,
            1 => SketchKind::Rfd,
            2 => SketchKind::Isvd,
            3 => SketchKind::TwoLevel,
            4 => SketchKind::RandomProjection,
            5 => SketchKind::CountSketch,
            other => return Err(bad(format!("unknown sketch kind {other}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub kind: SketchKind,
    pub ell: u64,
    pub d: u64,
    pub n_seen: u64,
    pub alpha: f64,
}

pub(crate) fn bad(reason: impl Into<String>) -> FdError {
    FdError::Format {
        format: "FDSK",
        reason: reason.into(),
    }
}

pub fn write_header<W: Write + ?Sized>(w: &mut W, h: &Header) -> Result<()> {
    w.write_all(FDSK_MAGIC)?;
    w.write_all(&FDSK_VERSION.to_le_bytes())?;
    w.write_all(&[h.kind as u8])?;
    put_u64(w, h.ell)?;
    put_u64(w, h.d)?;
    put_u64(w, h.n_seen)?;
    put_f64(w, h.alpha)
}

pub fn read_header<R: Read + ?Sized>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != FDSK_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v).map_err(|_| bad("truncated header"))?;
    let version = u32::from_le_bytes(v);
    if version != FDSK_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(|_| bad("truncated header"))?;
    Ok(Header {
        kind: SketchKind::from_code(kind[0])?,
        ell: get_u64(r)?,
        d: get_u64(r)?,
        n_seen: get_u64(r)?,
        alpha: get_f64(r)?,
    })
}

pub fn put_u64<W: Write + ?Sized>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_u128<W: Write + ?Sized>(w: &mut W, v: u128) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_f64<W: Write + ?Sized>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_f64s<W: Write + ?Sized>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        put_f64(w, *v)?;
    }
    Ok(())
}

pub fn get_u64<R: Read + ?Sized>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated payload"))?;
    Ok(u64::from_le_bytes(b))
}

pub fn get_u128<R: Read + ?Sized>(r: &mut R) -> Result<u128> {
    let mut b = [0u8; 16];
    r.read_exact(&mut b).map_err(|_| bad("truncated payload"))?;
    Ok(u128::from_le_bytes(b))
}

pub fn get_f64<R: Read + ?Sized>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated payload"))?;
    Ok(f64::from_le_bytes(b))
}

pub fn get_f64s<R: Read + ?Sized>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| get_f64(r)).collect()
}

pub fn get_matrix<R: Read + ?Sized>(r: &mut R, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("dimensions overflow"))?;
    DenseMatrix::from_row_major(rows, cols, get_f64s(r, len)?)
}

/// Fails unless the reader is exhausted.
pub fn expect_end<R: Read + ?Sized>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(bad("trailing bytes after sketch body")),
    }
}

impl FdSketch {
    pub fn kind(&self) -> SketchKind {
        match self.variant {
            Variant::Fd => SketchKind::Fd,
            Variant::Rfd => SketchKind::Rfd,
            Variant::Isvd => SketchKind::Isvd,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.is_flushed() {
            return Err(FdError::State(
                "flush the sketch before serializing it".into(),
            ));
        }
        write_header(
            &mut w,
            &Header {
                kind: self.kind(),
                ell: self.ell as u64,
                d: self.d as u64,
                n_seen: self.n_seen,
                alpha: self.alpha,
            },
        )?;
        put_f64s(&mut w, &self.sigma)?;
        put_f64s(&mut w, self.v_rows.as_slice())?;
        put_f64s(&mut w, &self.c)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let h = read_header(&mut r)?;
        let sketch = Self::read_body(&mut r, &h)?;
        expect_end(&mut r)?;
        Ok(sketch)
    }

    pub(crate) fn read_body<R: Read + ?Sized>(r: &mut R, h: &Header) -> Result<Self> {
        let variant = match h.kind {
            SketchKind::Fd => Variant::Fd,
            SketchKind::Rfd => Variant::Rfd,
            SketchKind::Isvd => Variant::Isvd,
            other => return Err(bad(format!("{other:?} is not a frequent-directions sketch"))),
        };
        let (ell, d) = (h.ell as usize, h.d as usize);
        let sigma = get_f64s(r, ell)?;
        let v_rows = get_matrix(r, ell, d)?;
        let c = get_f64s(r, d)?;
        FdSketch::from_parts(variant, ell, d, h.n_seen, h.alpha, sigma, v_rows, c)
    }
}
