//! Binary checkpoint: `"TDTL"`, version `u32`, dense layer count `u32`, then
//! per dense layer `in_dim u32`, `out_dim u32`, weights row-major and biases,
//! all little-endian `f64`.

use std::io::{Read, Write};

use super::{DenseParams, NetworkParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TDTL";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(params: &NetworkParams, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(params.dense.len() as u32).to_le_bytes()).map_err(io)?;
    for layer in &params.dense {
        let (rows, cols) = layer.weight.shape();
        w.write_all(&(rows as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(cols as u32).to_le_bytes()).map_err(io)?;
        for v in layer.weight.as_slice().iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(io)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf).map_err(io)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<NetworkParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut dense = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let weight = Matrix::from_vec(rows, cols, read_f64s(&mut r, rows * cols)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bias = read_f64s(&mut r, cols)?;
        dense.push(DenseParams { weight, bias });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last layer".into()));
    }
    Ok(NetworkParams { dense })
}
