//! `EMB1` interchange file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"EMB1" | rows: u32 | dim: u32 | rows * dim f32 values, row-major
//! ```
//!
//! Row keys live in a JSON array sidecar at `<path>.keys.json`, same order
//! and count as the rows.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EmbedError, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    BuiltinHash,
    External(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::BuiltinHash => f.write_str("builtin-hash"),
            Provenance::External(src) => write!(f, "external:{src}"),
        }
    }
}

/// Key-indexed dense rows sharing one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f32>,
    provenance: Provenance,
}

/// Equality ignores provenance and compares values bit for bit.
impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.keys == other.keys
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::InvalidDimension(dim));
        }
        Ok(EmbeddingStore {
            dim,
            keys: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            provenance,
        })
    }

    pub fn push(&mut self, key: String, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                left: self.dim,
                right: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(key));
        }
        if self.index.contains_key(&key) {
            return Err(EmbedError::DuplicateKey(key));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Serialized payload of the binary file (without sidecar).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a binary payload and its sidecar key list.
    pub fn from_bytes(bytes: &[u8], keys: Vec<String>, provenance: Provenance) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(EmbedError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(EmbedError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let rows = word(4);
        let dim = word(8);
        let expected = HEADER_LEN + rows * dim * 4;
        if bytes.len() < expected {
            return Err(EmbedError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(EmbedError::TrailingBytes(bytes.len() - expected));
        }
        if keys.len() != rows {
            return Err(EmbedError::SidecarMismatch {
                sidecar: keys.len(),
                rows,
            });
        }
        let mut store = EmbeddingStore::new(dim, provenance)?;
        let mut row = vec![0.0f32; dim];
        for (r, key) in keys.into_iter().enumerate() {
            let base = HEADER_LEN + r * dim * 4;
            for (c, slot) in row.iter_mut().enumerate() {
                let at = base + c * 4;
                *slot = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
            }
            store.push(key, &row)?;
        }
        Ok(store)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".keys.json");
    PathBuf::from(name)
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    fs::write(path, store.to_bytes())?;
    fs::write(sidecar_path(path), serde_json::to_vec(store.keys())?)?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path)?;
    let keys: Vec<String> = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    EmbeddingStore::from_bytes(&bytes, keys, Provenance::External(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_three() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3, Provenance::BuiltinHash).unwrap();
        s.push("g/prompt".into(), &[1.0, -2.5, 0.125]).unwrap();
        s.push("g/candidate_0".into(), &[0.0, 3.0, -0.0]).unwrap();
        s
    }

    #[test]
    fn two_rows_dim_three_is_36_bytes() {
        let bytes = two_by_three().to_bytes();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 24);
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn save_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let store = two_by_three();
        save_store(&store, &path).unwrap();
        assert!(sidecar_path(&path).ends_with("emb.bin.keys.json"));
        let loaded = load_store(&path).unwrap();
        assert_eq!(loaded, store);
        assert!(matches!(loaded.provenance(), Provenance::External(_)));
        assert_eq!(loaded.get("g/candidate_0").unwrap()[2].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = two_by_three().to_bytes();
        bytes[3] = b'2';
        let keys = vec!["a".into(), "b".into()];
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, keys, Provenance::BuiltinHash),
            Err(EmbedError::BadMagic)
        ));
    }

    #[test]
    fn truncated_and_trailing_payloads() {
        let bytes = two_by_three().to_bytes();
        let keys = || vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..30], keys(), Provenance::BuiltinHash),
            Err(EmbedError::Truncated {
                expected: 36,
                found: 30
            })
        ));
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..8], keys(), Provenance::BuiltinHash),
            Err(EmbedError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            EmbeddingStore::from_bytes(&long, keys(), Provenance::BuiltinHash),
            Err(EmbedError::TrailingBytes(1))
        ));
    }

    #[test]
    fn sidecar_count_mismatch() {
        let bytes = two_by_three().to_bytes();
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes, vec!["only".into()], Provenance::BuiltinHash),
            Err(EmbedError::SidecarMismatch { sidecar: 1, rows: 2 })
        ));
    }

    #[test]
    fn push_validates_rows() {
        let mut s = two_by_three();
        assert!(matches!(
            s.push("g/prompt".into(), &[0.0; 3]),
            Err(EmbedError::DuplicateKey(_))
        ));
        assert!(s.push("x".into(), &[0.0; 2]).is_err());
        assert!(matches!(
            s.push("y".into(), &[f32::NAN, 0.0, 0.0]),
            Err(EmbedError::NonFinite(_))
        ));
    }

    proptest! {
        #[test]
        fn bytes_roundtrip_preserves_every_bit(
            rows in prop::collection::vec(prop::collection::vec(-1e30f32..1e30, 4), 0..12)
        ) {
            let mut s = EmbeddingStore::new(4, Provenance::BuiltinHash).unwrap();
            for (i, r) in rows.iter().enumerate() {
                s.push(format!("k{i}/prompt"), r).unwrap();
            }
            let back = EmbeddingStore::from_bytes(&s.to_bytes(), s.keys().to_vec(), Provenance::BuiltinHash).unwrap();
            prop_assert_eq!(back.to_bytes(), s.to_bytes());
            prop_assert_eq!(back, s);
        }
    }
}
