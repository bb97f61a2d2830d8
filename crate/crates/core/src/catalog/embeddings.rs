//! Dense per-item embedding matrices and their binary file format.
//!
//! Layout: `b"CEMB"`, version byte `0x01`, little-endian `u32` row count,
//! little-endian `u32` dim, then per row a little-endian `u64` item id followed
//! by `dim` little-endian `f32` components.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Catalog;
use crate::scalar::Real;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"CEMB";
pub const EMBEDDING_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embeddings {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}, expected \"CEMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after the declared records")]
    TrailingBytes(usize),
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("row for item {id} has dimension {found}, expected {expected}")]
    DimMismatch { id: u64, expected: usize, found: usize },
    #[error("item {id} has a non-finite component at index {index}")]
    NonFinite { id: u64, index: usize },
    #[error("item {0} appears more than once")]
    DuplicateId(u64),
    #[error("embedding row for unknown item id {0}")]
    UnknownId(u64),
}

/// Row-major matrix of item vectors, rows kept in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<T>,
    index: HashMap<u64, usize>,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (u64, Vec<T>)>,
    {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut rows: Vec<(u64, Vec<T>)> = rows.into_iter().collect();
        for (id, v) in &rows {
            if v.len() != dim {
                return Err(EmbeddingError::DimMismatch {
                    id: *id,
                    expected: dim,
                    found: v.len(),
                });
            }
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFinite { id: *id, index });
            }
        }
        rows.sort_by_key(|(id, _)| *id);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(EmbeddingError::DuplicateId(w[0].0));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            ids.push(id);
            data.extend(v);
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self {
            dim,
            ids,
            data,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn row(&self, id: u64) -> Option<&[T]> {
        self.position(id).map(|i| self.row_at(i))
    }

    pub fn row_at(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, &[T])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn mean_row_norm(&self) -> T {
        if self.is_empty() {
            return T::zero();
        }
        let total: T = self
            .data
            .chunks_exact(self.dim)
            .map(crate::scalar::norm)
            .sum();
        total / T::of_usize(self.len())
    }

    /// Rows restricted to `ids` (ids missing from the set are skipped).
    pub fn subset(&self, ids: &[u64]) -> Self {
        let rows = ids
            .iter()
            .filter_map(|&id| self.row(id).map(|r| (id, r.to_vec())))
            .collect::<Vec<_>>();
        Self::from_rows(self.dim, rows).expect("subset of a valid set is valid")
    }

    /// Union of two sets with the same dimension and disjoint ids.
    pub fn merge(&self, other: &Self) -> Result<Self, EmbeddingError> {
        if other.dim != self.dim {
            let id = other.ids.first().copied().unwrap_or_default();
            return Err(EmbeddingError::DimMismatch {
                id,
                expected: self.dim,
                found: other.dim,
            });
        }
        let rows = self
            .rows()
            .chain(other.rows())
            .map(|(id, r)| (id, r.to_vec()));
        Self::from_rows(self.dim, rows)
    }

    pub fn cast<U: Real>(&self) -> EmbeddingSet<U> {
        EmbeddingSet {
            dim: self.dim,
            ids: self.ids.clone(),
            data: self
                .data
                .iter()
                .map(|&x| U::lit(x.as_f64()))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Serializes rows in ascending id order. Components are narrowed to `f32`.
pub fn encode_embeddings<T: Real>(set: &EmbeddingSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + set.len() * (8 + 4 * set.dim));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.push(EMBEDDING_VERSION);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim as u32).to_le_bytes());
    for (id, row) in set.rows() {
        out.extend_from_slice(&id.to_le_bytes());
        for &x in row {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_embeddings<T: Real>(bytes: &[u8]) -> Result<EmbeddingSet<T>, EmbeddingError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != EMBEDDING_MAGIC {
            return Err(EmbeddingError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(EmbeddingError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != EMBEDDING_MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    if bytes[4] != EMBEDDING_VERSION {
        return Err(EmbeddingError::UnsupportedVersion(bytes[4]));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    let record = 8 + 4 * dim;
    let expected = HEADER_LEN + n * record;
    if bytes.len() < expected {
        return Err(EmbeddingError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(EmbeddingError::TrailingBytes(bytes.len() - expected));
    }
    let rows = bytes[HEADER_LEN..].chunks_exact(record).map(|rec| {
        let id = u64::from_le_bytes(rec[..8].try_into().unwrap());
        let row = rec[8..]
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect::<Vec<T>>();
        (id, row)
    });
    EmbeddingSet::from_rows(dim, rows)
}

/// Reads an embedding file without checking ids against a catalog.
pub fn read_embeddings<T: Real>(path: impl AsRef<Path>) -> Result<EmbeddingSet<T>, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_embeddings(&bytes)
}

/// Reads an embedding file and checks every row id resolves to a catalog item.
pub fn load_embeddings<T: Real>(
    path: impl AsRef<Path>,
    catalog: &Catalog,
) -> Result<EmbeddingSet<T>, EmbeddingError> {
    let set = read_embeddings(path)?;
    if let Some(&id) = set.ids().iter().find(|&&id| !catalog.contains(id)) {
        return Err(EmbeddingError::UnknownId(id));
    }
    Ok(set)
}

pub fn write_embeddings<T: Real>(
    path: impl AsRef<Path>,
    set: &EmbeddingSet<T>,
) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(set)).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })
}
