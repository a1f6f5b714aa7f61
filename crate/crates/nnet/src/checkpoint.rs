//! Versioned binary container for named parameter arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "GDSRCKPT"
//! version    u32       currently 1
//! manifest   u32 len + UTF-8 bytes
//! count      u32       number of tensors
//! tensor     u32 name len + UTF-8 name
//!            u32 ndim, ndim × u64 dims
//!            f64 × Π dims
//! ```
//!
//! Nothing may follow the last tensor.

use std::collections::HashSet;

use crate::error::{NnetError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GDSRCKPT";
pub const VERSION: u32 = 1;

const MAX_NDIM: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(manifest: impl Into<String>, store: &ParamStore) -> Self {
        Self {
            manifest: manifest.into(),
            tensors: store
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self
            .tensors
            .iter()
            .map(|(n, t)| 8 + n.len() + 8 * t.shape().len() + 8 * t.len())
            .sum();
        let mut out = Vec::with_capacity(24 + self.manifest.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(self.manifest.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let manifest = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        let mut names = HashSet::new();
        for _ in 0..count {
            let name = r.string()?;
            if !names.insert(name.clone()) {
                return Err(bad(&format!("duplicate tensor `{name}`")));
            }
            let ndim = r.u32()?;
            if ndim > MAX_NDIM {
                return Err(bad(&format!("tensor `{name}` has {ndim} dimensions")));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut elems: usize = 1;
            for _ in 0..ndim {
                let d = usize::try_from(r.u64()?).map_err(|_| bad("dimension overflow"))?;
                elems = elems
                    .checked_mul(d)
                    .ok_or_else(|| bad("element count overflow"))?;
                shape.push(d);
            }
            let nbytes = elems
                .checked_mul(8)
                .ok_or_else(|| bad("element count overflow"))?;
            let raw = r.take(nbytes)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad(&format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { manifest, tensors })
    }
}

fn bad(msg: &str) -> NnetError {
    NnetError::Checkpoint(msg.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad(&format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| bad("invalid UTF-8 string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            manifest: "{\"latent\":128}".into(),
            tensors: vec![
                ("a.w".into(), Tensor::matrix(2, 2, vec![1.0, -2.0, 3.5, f64::MIN_POSITIVE])),
                ("a.b".into(), Tensor::matrix(1, 2, vec![0.0, -0.0])),
            ],
        }
    }

    #[test]
    fn header_is_magic_then_version() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..8], b"GDSRCKPT");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    }

    #[test]
    fn decode_inverts_encode_bitwise() {
        let c = sample();
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.manifest, c.manifest);
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let bytes = sample().encode();
        for cut in [0, 7, 12, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn rejects_huge_dimensions_without_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'x');
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(Checkpoint::decode(&bytes).is_err());
    }
}
