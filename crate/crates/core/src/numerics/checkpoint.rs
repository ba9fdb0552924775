//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"SKCK"
//! version  u32                     (currently 1)
//! count    u32                     number of entries
//! entry*   u32 name_len, name bytes (UTF-8),
//!          u32 rank, rank x u64 dims,
//!          prod(dims) x f64 payload
//! meta     u32 len, UTF-8 bytes    free-form config record, may be empty
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SKCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialize values (not gradients or optimizer state) plus a metadata record.
pub fn encode(store: &ParamStore, meta: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, entry) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let shape = entry.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in entry.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
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
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ParamStore, String)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = c.string()?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = c.take(n * 8)?;
        let data = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    let meta = c.string()?;
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((store, meta))
}

pub fn save(path: &Path, store: &ParamStore, meta: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(store, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ParamStore, String)> {
    let mut buf = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bit_exact_round_trip(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
            meta in "[a-z=\n ]{0,30}",
        ) {
            let mut s = ParamStore::new();
            s.insert("a.w", Tensor::new(vec![1, values.len()], values.clone()).unwrap()).unwrap();
            s.insert("b", Tensor::scalar(-0.0)).unwrap();
            let bytes = encode(&s, &meta);
            let (back, m) = decode(&bytes).unwrap();
            prop_assert_eq!(&m, &meta);
            prop_assert_eq!(encode(&back, &m), bytes);
        }
    }

    #[test]
    fn truncated_input_is_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(2, 2)).unwrap();
        let bytes = encode(&s, "");
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"NOPE").is_err());
    }

    #[test]
    fn payload_size_matches_parameter_count() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(3, 5)).unwrap();
        let bytes = encode(&s, "");
        // magic + version + count + name_len + "w" + rank + 2 dims + payload + meta_len
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 1 + 4 + 16 + 15 * 8 + 4);
    }
}
