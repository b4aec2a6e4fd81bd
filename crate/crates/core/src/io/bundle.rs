use super::{read_payload, read_u32, read_u64, truncated, write_payload, write_u32, write_u64};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const BUNDLE_MAGIC: &[u8; 4] = b"MDCB";
const BUNDLE_VERSION: u32 = 1;

/// JSON header plus named matrix blobs.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub header: serde_json::Value,
    pub blobs: Vec<(String, DMatrix<f64>)>,
}

impl Bundle {
    pub fn new<H: Serialize>(header: &H) -> Result<Self> {
        Ok(Self { header: serde_json::to_value(header)?, blobs: Vec::new() })
    }

    pub fn push(&mut self, name: &str, m: DMatrix<f64>) {
        self.blobs.push((name.to_owned(), m));
    }

    pub fn header_as<H: DeserializeOwned>(&self) -> Result<H> {
        Ok(serde_json::from_value(self.header.clone())?)
    }

    pub fn take(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let pos = self
            .blobs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing blob `{name}`")))?;
        Ok(self.blobs.remove(pos).1)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(BUNDLE_MAGIC)?;
        write_u32(w, BUNDLE_VERSION)?;
        let header = serde_json::to_vec(&self.header)?;
        write_u64(w, header.len() as u64)?;
        w.write_all(&header)?;
        write_u32(w, self.blobs.len() as u32)?;
        for (name, m) in &self.blobs {
            write_u32(w, name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            write_u64(w, m.nrows() as u64)?;
            write_u64(w, m.ncols() as u64)?;
            write_payload(w, m)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::Format("bad magic, expected MDCB".into()));
        }
        let version = read_u32(r)?;
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let len = read_u64(r)?;
        if len > 1 << 30 {
            return Err(Error::Format("header too large".into()));
        }
        let mut header = vec![0u8; len as usize];
        r.read_exact(&mut header).map_err(truncated)?;
        let header = serde_json::from_slice(&header).map_err(|e| Error::Format(format!("bad bundle header: {e}")))?;
        let count = read_u32(r)?;
        let mut blobs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(r)?;
            if name_len > 4096 {
                return Err(Error::Format("blob name too long".into()));
            }
            let mut name = vec![0u8; name_len as usize];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("blob name not UTF-8".into()))?;
            let rows = read_u64(r)?;
            let cols = read_u64(r)?;
            blobs.push((name, read_payload(r, rows, cols)?));
        }
        Ok(Self { header, blobs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_roundtrip() {
        let mut b = Bundle::new(&serde_json::json!({"kind": "test", "eps": 0.5})).unwrap();
        b.push("a", DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        b.push("empty", DMatrix::zeros(3, 0));
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        let mut back = Bundle::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.header["eps"], 0.5);
        assert_eq!(back.take("empty").unwrap().shape(), (3, 0));
        assert_eq!(back.take("a").unwrap()[(1, 0)], 3.0);
        assert!(back.take("a").is_err());
    }
}
