//! Binary tensor record:
//!
//! ```text
//! "EMKD" | u32 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 rank
//!        | rank × u32 extent | payload (row-major, little-endian)
//! ```

use super::{check_shape, Tensor};
use crate::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"EMKD";
pub const TENSOR_VERSION: u32 = 1;

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

/// Appends the record for `t` to `out`. `F32` rounds each element.
pub fn encode_tensor(t: &Tensor, dtype: DType, out: &mut Vec<u8>) {
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(dtype as u8);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match dtype {
        DType::F64 => t
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        DType::F32 => t
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
}

/// Little-endian reader that reports the failing byte offset.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!(
                "truncated: need {n} bytes, {} remain",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format {
                offset: at,
                msg: format!(
                    "bad magic {got:?}, expected {:?}",
                    std::str::from_utf8(want).unwrap()
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn decode_tensor_from(r: &mut ByteReader<'_>) -> Result<(Tensor, DType)> {
    r.magic(TENSOR_MAGIC)?;
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return r.fail(format!("unsupported tensor version {version}"));
    }
    let dtype = match r.u8()? {
        0 => DType::F32,
        1 => DType::F64,
        other => return r.fail(format!("unknown dtype {other}")),
    };
    let rank = r.u8()? as usize;
    if rank > super::MAX_RANK {
        return r.fail(format!("rank {rank} exceeds 4"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let n = match check_shape(&shape) {
        Ok(n) => n,
        Err(e) => return r.fail(e.to_string()),
    };
    let data: Vec<f64> = match dtype {
        DType::F64 => r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DType::F32 => r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok((Tensor::new(data, &shape)?, dtype))
}

/// Decodes exactly one record occupying the whole buffer.
pub fn decode_tensor(buf: &[u8]) -> Result<(Tensor, DType)> {
    let mut r = ByteReader::new(buf);
    let out = decode_tensor_from(&mut r)?;
    if !r.is_empty() {
        return r.fail("trailing bytes after tensor record");
    }
    Ok(out)
}
