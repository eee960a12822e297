//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "DAAMCKPT" | version | tensor count
//! per tensor: name length | name (UTF-8) | rank | dims... | f32 values
//! ```

use super::matrix::Matrix;
use super::params::ParamSet;
use crate::error::{CarpError, Result};

const MAGIC: &[u8; 8] = b"DAAMCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
        for &x in &p.value.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CarpError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CarpError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CarpError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CarpError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [a, b] => (*a, *b),
            _ => return Err(CarpError::Checkpoint(format!("{name}: rank {rank} unsupported"))),
        };
        let raw = r.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.push(name, Matrix::from_vec(rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(CarpError::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let mut p = ParamSet::new();
        p.push("gat.w", Matrix::from_vec(2, 2, vec![0.1, -2.5, 3.0, 1e-3]));
        p.push("gat.a", Matrix::scalar(std::f64::consts::PI));
        let bytes = encode(&p);
        assert_eq!(&bytes[..8], MAGIC);
        let q = decode(&bytes).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.get(0).name, "gat.w");
        assert_eq!(q.value(1).data[0], std::f64::consts::PI as f32 as f64);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
