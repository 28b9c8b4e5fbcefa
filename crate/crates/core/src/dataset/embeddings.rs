//! `HSEB` embedding bridge: per-segment feature vectors computed outside this
//! crate (for example by a pre-trained audio model).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HSEB" | u32 version=1 | u32 dim | u32 count
//! count × ( u16 id_len | id bytes (UTF-8) | u32 segment_index | dim × f32 )
//! ```
//!
//! `segment_index` is the window start divided by the 2.5 s hop, so an
//! exporter that embeds every window on that grid serves both the training and
//! the test segmentation.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HSEB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    entries: BTreeMap<(String, u32), Vec<f32>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, recording_id: &str, segment_index: u32, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding for ({recording_id}, {segment_index}) has length {}, set dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "embedding for ({recording_id}, {segment_index}) has non-finite values"
            )));
        }
        if recording_id.len() > u16::MAX as usize {
            return Err(Error::Precondition(format!(
                "recording id of {} bytes exceeds the 65535-byte limit",
                recording_id.len()
            )));
        }
        self.entries.insert((recording_id.to_string(), segment_index), vector);
        Ok(())
    }

    pub fn get(&self, recording_id: &str, segment_index: u32) -> Option<&[f32]> {
        self.entries
            .get(&(recording_id.to_string(), segment_index))
            .map(Vec::as_slice)
    }

    /// Entries ordered by (recording id, segment index).
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, &[f32])> {
        self.entries
            .iter()
            .map(|((id, idx), v)| (id.as_str(), *idx, v.as_slice()))
    }

    /// Segment indices present per recording, the optional sidecar index.
    pub fn index(&self) -> BTreeMap<String, Vec<u32>> {
        let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (id, idx) in self.entries.keys() {
            out.entry(id.clone()).or_default().push(*idx);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_entry: usize = self.entries.keys().map(|(id, _)| 6 + id.len() + 4 * self.dim).sum();
        let mut out = Vec::with_capacity(16 + per_entry);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for ((id, idx), v) in &self.entries {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&idx.to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected HSEB".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported HSEB version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("HSEB dim is zero".into()));
        }
        let count = r.u32()? as usize;
        let mut set = EmbeddingSet::new(dim)?;
        for n in 0..count {
            let id_len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::Format(format!("entry {n}: recording id is not UTF-8")))?
                .to_string();
            let idx = r.u32()?;
            let payload = r.take(4 * dim)?;
            let v: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("entry ({id}, {idx}) has non-finite values")));
            }
            if set.entries.insert((id.clone(), idx), v).is_some() {
                return Err(Error::Format(format!("duplicate entry ({id}, {idx})")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} declared entries",
                bytes.len() - r.pos
            )));
        }
        Ok(set)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "payload truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes the advisory `{recording_id: [segment_indices]}` JSON sidecar.
pub fn write_embedding_index(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&set.index())?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_round_trip() {
        let set = EmbeddingSet::new(8).unwrap();
        let bytes = set.to_bytes();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[12..16], &0u32.to_le_bytes());
        assert_eq!(EmbeddingSet::from_bytes(&bytes).unwrap(), set);
    }

    #[test]
    fn payload_size_two_entries_dim3() {
        let mut set = EmbeddingSet::new(3).unwrap();
        set.insert("a", 0, vec![1.0, 2.0, 3.0]).unwrap();
        set.insert("b", 4, vec![-1.0, 0.5, 0.25]).unwrap();
        let bytes = set.to_bytes();
        // header 16 + per entry (2 + 1 + 4) framing; 24 bytes of f32 payload in total
        assert_eq!(bytes.len(), 16 + 2 * 7 + 24);
        assert_eq!(&bytes[16 + 7..16 + 7 + 12], &[1.0f32, 2.0, 3.0].map(f32::to_le_bytes).concat()[..]);
    }

    #[test]
    fn corrupt_inputs() {
        let mut set = EmbeddingSet::new(2).unwrap();
        set.insert("rec", 1, vec![0.5, 0.25]).unwrap();
        let good = set.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingSet::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(EmbeddingSet::from_bytes(&bad), Err(Error::Format(_))));

        assert!(matches!(EmbeddingSet::from_bytes(&good[..good.len() - 1]), Err(Error::Format(_))));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(EmbeddingSet::from_bytes(&long), Err(Error::Format(_))));

        let mut more = good;
        more[12] = 2;
        assert!(matches!(EmbeddingSet::from_bytes(&more), Err(Error::Format(_))));
    }

    #[test]
    fn insert_validates() {
        let mut set = EmbeddingSet::new(2).unwrap();
        assert!(matches!(set.insert("a", 0, vec![1.0]), Err(Error::Shape(_))));
        assert!(matches!(set.insert("a", 0, vec![1.0, f32::NAN]), Err(Error::Numerics(_))));
        assert!(EmbeddingSet::new(0).is_err());
    }
}
