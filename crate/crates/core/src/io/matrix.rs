use super::{read_payload, read_u32, read_u64, truncated, write_payload, write_u32, write_u64};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::io::{Read, Write};

pub const MATRIX_MAGIC: &[u8; 4] = b"MDEC";
pub const MATRIX_VERSION: u32 = 1;

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>, mass_flag: bool) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    write_u32(w, MATRIX_VERSION)?;
    write_u64(w, m.nrows() as u64)?;
    write_u64(w, m.ncols() as u64)?;
    w.write_all(&[u8::from(mass_flag)])?;
    write_payload(w, m)
}

/// Reads a matrix file, returning the matrix and its mass flag.
pub fn read_matrix<R: Read>(r: &mut R) -> Result<(DMatrix<f64>, bool)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("bad magic, expected MDEC".into()));
    }
    let version = read_u32(r)?;
    if version != MATRIX_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = read_u64(r)?;
    let cols = read_u64(r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(truncated)?;
    let mass = match flag[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad mass flag {other}"))),
    };
    let m = read_payload(r, rows, cols)?;
    Ok((m, mass))
}
