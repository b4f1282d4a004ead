//! Dense vectors for prompts, papers and prompt/paper pairs.
//!
//! Vectors come either from the built-in hashing vectorizer or from an
//! externally produced [`EmbeddingStore`] in the `EMB1` interchange format.

mod store;

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PairGroup, PairRecord};

pub use store::{load_store, save_store, sidecar_path, EmbeddingStore, Provenance};

/// Output width of the built-in vectorizer.
pub const DEFAULT_DIM: usize = 384;

/// Separator placed between prompt and paper text for joint pair embeddings.
pub const JOINT_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding store has no row `{0}`")]
    MissingKey(String),
    #[error("duplicate row key `{0}`")]
    DuplicateKey(String),
    #[error("row `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("bad magic bytes: expected `EMB1`")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("sidecar lists {sidecar} keys but the file holds {rows} rows")]
    SidecarMismatch { sidecar: usize, rows: usize },
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("invalid row key `{0}`")]
    InvalidKey(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sidecar json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// Role of a row inside an instance group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Prompt,
    Candidate(u8),
    Pair(u8),
}

/// Store row key, rendered as `<group_id>/prompt`, `<group_id>/candidate_<i>`
/// or `<group_id>/pair_<i>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowKey {
    pub group_id: String,
    pub role: Role,
}

impl RowKey {
    pub fn new(group_id: impl Into<String>, role: Role) -> Self {
        RowKey {
            group_id: group_id.into(),
            role,
        }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Prompt => write!(f, "{}/prompt", self.group_id),
            Role::Candidate(i) => write!(f, "{}/candidate_{i}", self.group_id),
            Role::Pair(i) => write!(f, "{}/pair_{i}", self.group_id),
        }
    }
}

impl FromStr for RowKey {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EmbedError::InvalidKey(s.to_string());
        let (gid, role) = s.rsplit_once('/').ok_or_else(bad)?;
        let index = |rest: &str| -> Result<u8> { rest.parse::<u8>().ok().filter(|i| *i < 4).ok_or_else(bad) };
        let role = if role == "prompt" {
            Role::Prompt
        } else if let Some(rest) = role.strip_prefix("candidate_") {
            Role::Candidate(index(rest)?)
        } else if let Some(rest) = role.strip_prefix("pair_") {
            Role::Pair(index(rest)?)
        } else {
            return Err(bad());
        };
        Ok(RowKey::new(gid, role))
    }
}

/// Signed feature-hashing bag of tokens.
///
/// Text is lowercased and split on non-alphanumeric characters. Each token is
/// hashed with 64-bit FNV-1a over its UTF-8 bytes; the bucket is
/// `hash % dim` and the sign is `-1` when the top bit of the hash is set.
/// Counts are accumulated and the result is L2-normalized (all zeros when the
/// text has no tokens).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltinVectorizer {
    pub dim: usize,
}

impl Default for BuiltinVectorizer {
    fn default() -> Self {
        BuiltinVectorizer { dim: DEFAULT_DIM }
    }
}

impl BuiltinVectorizer {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::InvalidDimension(dim));
        }
        Ok(BuiltinVectorizer { dim })
    }

    pub fn vectorize(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        let lowered = text.to_lowercase();
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let mut hasher = FnvHasher::default();
            hasher.write(token.as_bytes());
            let h = hasher.finish();
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; self.dim]
        }
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero vectors have similarity 0.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.into(), b.into());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// How a prompt/paper pair becomes one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Embed `prompt [SEP] paper_text` as one text.
    #[default]
    Joint,
    /// Concatenate the prompt embedding and the paper embedding.
    Concat,
}

impl FromStr for FeatureMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "joint" => Ok(FeatureMode::Joint),
            "concat" => Ok(FeatureMode::Concat),
            other => Err(format!("unknown feature mode `{other}` (expected joint|concat)")),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Joint => "joint",
            FeatureMode::Concat => "concat",
        })
    }
}

/// Where vectors come from.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    Builtin(BuiltinVectorizer),
    Store(EmbeddingStore),
}

impl EmbeddingSource {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSource::Builtin(v) => v.dim,
            EmbeddingSource::Store(s) => s.dim(),
        }
    }

    fn lookup(&self, key: RowKey, text: impl FnOnce() -> String) -> Result<Vec<f32>> {
        match self {
            EmbeddingSource::Builtin(v) => Ok(v.vectorize(&text())),
            EmbeddingSource::Store(s) => {
                let key = key.to_string();
                s.get(&key).map(<[f32]>::to_vec).ok_or(EmbedError::MissingKey(key))
            }
        }
    }

    pub fn prompt_vector(&self, pair: &PairRecord) -> Result<Vec<f32>> {
        self.lookup(RowKey::new(&pair.group_id, Role::Prompt), || pair.prompt.clone())
    }

    pub fn paper_vector(&self, pair: &PairRecord) -> Result<Vec<f32>> {
        self.lookup(
            RowKey::new(&pair.group_id, Role::Candidate(pair.candidate_index)),
            || pair.paper_text.clone(),
        )
    }

    pub fn joint_vector(&self, pair: &PairRecord) -> Result<Vec<f32>> {
        self.lookup(RowKey::new(&pair.group_id, Role::Pair(pair.candidate_index)), || {
            joint_text(&pair.prompt, &pair.paper_text)
        })
    }

    pub fn provenance(&self) -> String {
        match self {
            EmbeddingSource::Builtin(v) => format!("builtin-hash(dim={})", v.dim),
            EmbeddingSource::Store(s) => s.provenance().to_string(),
        }
    }
}

pub fn joint_text(prompt: &str, paper_text: &str) -> String {
    format!("{prompt}{JOINT_SEPARATOR}{paper_text}")
}

/// Width of the pair feature vector for `mode`.
pub fn feature_dim(source: &EmbeddingSource, mode: FeatureMode) -> usize {
    match mode {
        FeatureMode::Joint => source.dim(),
        FeatureMode::Concat => 2 * source.dim(),
    }
}

/// Feature vector of one prompt/paper pair.
pub fn pair_features(pair: &PairRecord, source: &EmbeddingSource, mode: FeatureMode) -> Result<Vec<f64>> {
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from);
    Ok(match mode {
        FeatureMode::Joint => widen(source.joint_vector(pair)?).collect(),
        FeatureMode::Concat => widen(source.prompt_vector(pair)?)
            .chain(widen(source.paper_vector(pair)?))
            .collect(),
    })
}

/// Builds a store holding, per group, the prompt row, the four candidate rows
/// and the four joint pair rows, in that order.
pub fn build_builtin_store(groups: &[PairGroup], vectorizer: &BuiltinVectorizer) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(vectorizer.dim, Provenance::BuiltinHash)?;
    for g in groups {
        store.push(
            RowKey::new(&g.group_id, Role::Prompt).to_string(),
            &vectorizer.vectorize(g.prompt()),
        )?;
        for p in &g.pairs {
            store.push(
                RowKey::new(&g.group_id, Role::Candidate(p.candidate_index)).to_string(),
                &vectorizer.vectorize(&p.paper_text),
            )?;
        }
        for p in &g.pairs {
            store.push(
                RowKey::new(&g.group_id, Role::Pair(p.candidate_index)).to_string(),
                &vectorizer.vectorize(&joint_text(&p.prompt, &p.paper_text)),
            )?;
        }
    }
    Ok(store)
}
