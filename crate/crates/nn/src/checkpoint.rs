//! Flat binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "MIRGCKP1"
//! count      u64      number of tensors
//! shapes     count x (u64 rows, u64 cols)
//! data       f64 values of every tensor in order, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MIRGCKP1";

pub fn write_tensors<W: Write>(mut w: W, tensors: &[Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
    }
    for t in tensors {
        for x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| NnError::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let count = read_u64(&mut r)? as usize;
    if count > 1 << 20 {
        return Err(NnError::Checkpoint(format!("implausible tensor count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        shapes.push((rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| NnError::Checkpoint("shape overflow".into()))?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| NnError::Checkpoint(format!("truncated data: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Tensor::new(rows, cols, data));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    let mut buf = Vec::new();
    write_tensors(&mut buf, tensors)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    read_tensors(fs::read(path)?.as_slice())
}
