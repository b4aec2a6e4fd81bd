//! On-disk containers.
//!
//! Two binary layouts are used, both little-endian with row-major `f64`
//! payloads:
//!
//! * **Matrix file** (`MDEC`): magic `b"MDEC"`, `u32` version (= 1), `u64` rows,
//!   `u64` cols, `u8` mass flag, then `rows × cols` values. Datasets use this
//!   layout with a JSON sidecar next to it (`<path>.json`).
//! * **Bundle** (`MDCB`): magic `b"MDCB"`, `u32` version (= 1), `u64` header
//!   length, the JSON header bytes, `u32` blob count, then for every blob a
//!   `u32` name length, the UTF-8 name, `u64` rows, `u64` cols and the values.
//!   Fitted encoders and decoders are stored as bundles.

mod bundle;
mod matrix;

pub use bundle::Bundle;
pub use matrix::{read_matrix, write_matrix, MATRIX_MAGIC, MATRIX_VERSION};

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::io::{Read, Write};

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn write_payload<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_payload<R: Read>(r: &mut R, rows: u64, cols: u64) -> Result<DMatrix<f64>> {
    let count = rows
        .checked_mul(cols)
        .filter(|c| *c <= (1u64 << 34))
        .ok_or_else(|| Error::Format(format!("implausible shape {rows}x{cols}")))?;
    let (rows, cols) = (rows as usize, cols as usize);
    let mut buf = vec![0u8; count as usize * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    let mut m = DMatrix::zeros(rows, cols);
    for (k, chunk) in buf.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        m[(k / cols, k % cols)] = v;
    }
    Ok(m)
}
