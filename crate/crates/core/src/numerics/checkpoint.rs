//! Checkpoint files: `"FPGN"`, version (u16 LE), d (u64 LE), then d f64 LE.

use std::io::{Read, Write};
use std::path::Path;

use super::Params;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FPGN";
pub const VERSION: u16 = 1;

pub fn encode(params: &Params<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Params<f64>> {
    if bytes.len() < 14 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let d = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let body = &bytes[14..];
    if body.len() != d.checked_mul(8).ok_or_else(|| Error::Checkpoint("dimension overflow".into()))? {
        return Err(Error::Checkpoint(format!("header declares {d} values but body holds {} bytes", body.len())));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter value".into()));
    }
    Ok(Params::from_vec(values))
}

pub fn write(path: &Path, params: &Params<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(params))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Params<f64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}
