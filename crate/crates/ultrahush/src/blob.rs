//! Raw little-endian f64 files — the payload format shared by every on-disk
//! bundle (channel models, checkpoints). Bit-exact round-trips.

use crate::error::{Error, Result};
use std::path::Path;

pub(crate) fn write_f64s(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{}: length not a multiple of 8", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
