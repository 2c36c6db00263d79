//! Binary encoder checkpoints.
//!
//! Layout (little endian): magic `NSYCKPT\0`, version `u32`, architecture
//! hash `u64`, parameter count `u64`, then every parameter as `f32` in
//! declaration order.

use std::io::{Read, Write};

use super::{EncoderNet, EncoderShape, NnError, Tensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"NSYCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(net: &EncoderNet<T>, mut out: W) -> Result<(), NnError> {
    let shape = net.shape();
    let mut buf = Vec::with_capacity(28 + 4 * net.param_count());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&shape.architecture_hash().to_le_bytes());
    buf.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for t in net.params() {
        for v in t.data() {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| NnError::Io(e.to_string()))
}

/// Reads a checkpoint that must match `shape` exactly.
pub fn read_checkpoint<T: Scalar, R: Read>(shape: EncoderShape, mut input: R) -> Result<EncoderNet<T>, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| NnError::Io(e.to_string()))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4"));
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Version(version));
    }
    let hash = u64::from_le_bytes(cur.take(8)?.try_into().expect("8"));
    if hash != shape.architecture_hash() {
        return Err(NnError::Architecture { expected: shape.architecture_hash(), found: hash });
    }
    let count = u64::from_le_bytes(cur.take(8)?.try_into().expect("8"));
    if count != shape.param_count() as u64 {
        return Err(NnError::Shape(format!("{count} parameters, expected {}", shape.param_count())));
    }
    let mut params = Vec::new();
    for dims in shape.param_shapes() {
        let len: usize = dims.iter().product();
        let raw = cur.take(4 * len)?;
        let data: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().expect("4")) as f64))
            .collect();
        params.push(Tensor::from_vec(&dims, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(NnError::Shape(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    EncoderNet::from_params(shape, params)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(NnError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}
