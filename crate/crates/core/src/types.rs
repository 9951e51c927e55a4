//! Domain types shared by every layer: identifiers, embeddings, chunks and
//! search hits, plus the single distance metric used throughout.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identifier of a data chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub u64);

/// Identifier of a second-level cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A dense 32-bit float vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps `values`, rejecting NaN or infinite components.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Embedding(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        Embedding(vec![0.0; dimension])
    }

    /// Wraps values already known to be finite (internal arithmetic on finite inputs).
    pub(crate) fn from_finite(values: Vec<f32>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Embedding(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Embedding) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// A text fragment of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataChunk {
    pub id: ChunkId,
    pub text: String,
    pub char_len: usize,
}

impl DataChunk {
    pub fn new(id: ChunkId, text: impl Into<String>) -> Self {
        let text = text.into();
        let char_len = text.chars().count();
        DataChunk { id, text, char_len }
    }
}

/// All indexed chunks by id.
pub type ChunkTable = BTreeMap<ChunkId, DataChunk>;

/// One retrieved chunk and its squared L2 distance to the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: ChunkId,
    pub distance: f32,
}

impl SearchHit {
    /// Result ordering: ascending distance, ties by ascending chunk id.
    pub fn rank_cmp(&self, other: &SearchHit) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.chunk_id.cmp(&other.chunk_id))
    }
}

/// Squared Euclidean distance between two embeddings of equal dimension.
pub fn distance(a: &Embedding, b: &Embedding) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(l2_squared(a.as_slice(), b.as_slice()))
}

/// Squared L2 over raw slices. Callers guarantee equal lengths.
#[inline]
pub(crate) fn l2_squared(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
