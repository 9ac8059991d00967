//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "IMGN" | u32 version | u32 meta_len | meta_len bytes of JSON metadata
//! | u32 n_tensors | n_tensors x (u32 name_len | name | u32 ndim | ndim x u32 dim | f32 values)
//! | u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"IMGN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata)?;
        let mut out = Vec::with_capacity(meta.len() + 64 + self.tensors.iter().map(|(_, t)| t.len() * 4 + 64).sum::<usize>());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let len32 = |n: usize| u32::try_from(n).map_err(|_| corrupt("section too large"));
        out.extend_from_slice(&len32(meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&len32(self.tensors.len())?.to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&len32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len32(t.shape().len())?.to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&len32(d)?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(corrupt("truncated"));
        }
        if bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("CRC mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
        }
        let meta_len = r.u32()? as usize;
        let metadata = serde_json::from_slice(r.take(meta_len)?).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(r.remaining() / 8));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(corrupt(format!("tensor `{name}` has {ndim} dimensions")));
            }
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&c| c <= r.remaining() / 4)
                .ok_or_else(|| corrupt(format!("tensor `{name}` exceeds the file")))?;
            let data = r.take(count * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes before CRC"));
        }
        Ok(Self { metadata, tensors })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("imgn.tmp");
        std::fs::write(&tmp, self.encode()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            metadata: serde_json::json!({"variant": "multigan", "epoch": 3, "best": 0.125}),
            tensors: vec![
                ("g/w".into(), Tensor::matrix(2, 3, vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, -0.0]).unwrap()),
                ("d/b".into(), Tensor::new(vec![1], vec![7.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
        assert_eq!(&bytes[..4], b"IMGN");
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode().unwrap();
        bytes[20] ^= 1;
        assert!(Checkpoint::decode(&bytes).unwrap_err().to_string().contains("CRC"));
        let mut bad = sample().encode().unwrap();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = sample().encode().unwrap();
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(Checkpoint::decode(&bytes).unwrap_err().to_string().contains("version"));
    }

    proptest! {
        #[test]
        fn truncation_never_panics(cut in 0usize..200) {
            let bytes = sample().encode().unwrap();
            let cut = cut.min(bytes.len() - 1);
            prop_assert!(Checkpoint::decode(&bytes[..cut]).is_err());
        }
    }
}
