//! On-disk index snapshots.
//!
//! Sparse indices are JSON documents with a `format_version` field. Dense
//! indices use a small binary layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "CVXD"
//! version      u32      1
//! kind         u8       0 = documents, 1 = generated queries
//! similarity   u8       0 = inner product, 1 = cosine
//! reserved     u16      0
//! dimension    u32
//! vectors      u32      number of vectors
//! ids          u32      number of document ids
//! data         vectors * dimension f32
//! id table     ids * (u32 byte length + UTF-8 bytes)
//! owners       vectors * u32 (query kind only)
//! ```

use std::path::Path;

use covex_core::dense::{QueryIndex, Similarity, TextIndex};
use covex_core::sparse::InvertedIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

pub const SPARSE_FORMAT_VERSION: u32 = 1;
pub const DENSE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CVXD";

#[derive(Serialize, Deserialize)]
struct SparseSnapshot {
    format_version: u32,
    index: InvertedIndex,
}

pub fn write_sparse(path: &Path, index: &InvertedIndex) -> Result<()> {
    let snap = SparseSnapshot {
        format_version: SPARSE_FORMAT_VERSION,
        index: index.clone(),
    };
    let bytes = serde_json::to_vec(&snap).expect("in-memory serialization");
    fsio::atomic_write(path, &bytes)
}

pub fn read_sparse(path: &Path) -> Result<InvertedIndex> {
    let bytes = fsio::read_bytes(path)?;
    let snap: SparseSnapshot = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))?;
    if snap.format_version != SPARSE_FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported sparse snapshot version {}", snap.format_version),
        ));
    }
    Ok(snap.index)
}

/// Decoded dense snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum DenseSnapshot {
    Documents { similarity: Similarity, index: TextIndex },
    Queries { similarity: Similarity, index: QueryIndex },
}

fn encode(kind: u8, similarity: Similarity, dimension: usize, data: &[f32], ids: &[String], owners: &[u32]) -> Vec<u8> {
    let count = data.len() / dimension.max(1);
    let mut out = Vec::with_capacity(24 + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&DENSE_FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.push(similarity.as_u8());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(dimension as u32).to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for o in owners {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out
}

pub fn encode_text_index(index: &TextIndex, similarity: Similarity) -> Vec<u8> {
    encode(0, similarity, index.dimension(), index.raw_vectors(), index.doc_ids(), &[])
}

pub fn encode_query_index(index: &QueryIndex, similarity: Similarity) -> Vec<u8> {
    encode(1, similarity, index.dimension(), index.raw_vectors(), index.doc_ids(), index.owners())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u8(&mut self) -> Option<u8> {
        Some(self.take(1)?[0])
    }
}

pub fn decode_dense(path: &Path, bytes: &[u8]) -> Result<DenseSnapshot> {
    let truncated = || Error::format(path, "truncated dense snapshot");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok_or_else(truncated)? != MAGIC {
        return Err(Error::format(path, "not a dense snapshot (bad magic)"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != DENSE_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported dense snapshot version {version}")));
    }
    let kind = r.u8().ok_or_else(truncated)?;
    let similarity = Similarity::from_u8(r.u8().ok_or_else(truncated)?)
        .ok_or_else(|| Error::format(path, "unknown similarity code"))?;
    r.take(2).ok_or_else(truncated)?;
    let dimension = r.u32().ok_or_else(truncated)? as usize;
    let count = r.u32().ok_or_else(truncated)? as usize;
    let n_ids = r.u32().ok_or_else(truncated)? as usize;
    let floats = count.checked_mul(dimension).ok_or_else(truncated)?;
    let raw = r.take(floats.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let mut ids = Vec::with_capacity(n_ids);
    for _ in 0..n_ids {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let s = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| Error::format(path, "document id is not UTF-8"))?;
        ids.push(s.to_string());
    }
    let snapshot = match kind {
        0 => DenseSnapshot::Documents {
            similarity,
            index: TextIndex::from_raw(dimension, ids, data).map_err(|e| Error::format(path, e))?,
        },
        1 => {
            let owners = (0..count).map(|_| r.u32()).collect::<Option<Vec<u32>>>().ok_or_else(truncated)?;
            DenseSnapshot::Queries {
                similarity,
                index: QueryIndex::from_raw(dimension, ids, owners, data).map_err(|e| Error::format(path, e))?,
            }
        }
        other => return Err(Error::format(path, format!("unknown snapshot kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after dense snapshot"));
    }
    Ok(snapshot)
}

pub fn write_text_index(path: &Path, index: &TextIndex, similarity: Similarity) -> Result<()> {
    fsio::atomic_write(path, &encode_text_index(index, similarity))
}

pub fn write_query_index(path: &Path, index: &QueryIndex, similarity: Similarity) -> Result<()> {
    fsio::atomic_write(path, &encode_query_index(index, similarity))
}

pub fn read_text_index(path: &Path) -> Result<(TextIndex, Similarity)> {
    match decode_dense(path, &fsio::read_bytes(path)?)? {
        DenseSnapshot::Documents { similarity, index } => Ok((index, similarity)),
        DenseSnapshot::Queries { .. } => Err(Error::format(path, "expected a document index, found a query index")),
    }
}

pub fn read_query_index(path: &Path) -> Result<(QueryIndex, Similarity)> {
    match decode_dense(path, &fsio::read_bytes(path)?)? {
        DenseSnapshot::Queries { similarity, index } => Ok((index, similarity)),
        DenseSnapshot::Documents { .. } => Err(Error::format(path, "expected a query index, found a document index")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use covex_core::sparse::{build_index, Bm25Params};
    use covex_core::text::Analyzer;

    #[test]
    fn dense_round_trip() {
        let ti = TextIndex::from_raw(2, vec!["a".into(), "bé".into()], vec![1.0, 0.0, 0.5, -0.25]).unwrap();
        let bytes = encode_text_index(&ti, Similarity::Cosine);
        assert_eq!(&bytes[..4], b"CVXD");
        assert_eq!(
            decode_dense(Path::new("t"), &bytes).unwrap(),
            DenseSnapshot::Documents { similarity: Similarity::Cosine, index: ti }
        );

        let qi = QueryIndex::from_raw(1, vec!["a".into(), "b".into()], vec![0, 1, 1], vec![0.1, 0.2, 0.3]).unwrap();
        let bytes = encode_query_index(&qi, Similarity::InnerProduct);
        assert_eq!(
            decode_dense(Path::new("q"), &bytes).unwrap(),
            DenseSnapshot::Queries { similarity: Similarity::InnerProduct, index: qi }
        );
        assert!(decode_dense(Path::new("q"), &bytes[..bytes.len() - 1]).is_err());
        assert!(decode_dense(Path::new("q"), b"XXXX").is_err());
    }

    #[test]
    fn sparse_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let idx = build_index([("d1", "cat sat"), ("d2", "dog")], Bm25Params::default(), Analyzer::default()).unwrap();
        write_sparse(&p, &idx).unwrap();
        assert_eq!(read_sparse(&p).unwrap(), idx);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"format_version\":1"));
    }
}
