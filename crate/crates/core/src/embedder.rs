//! Embedding providers and the generation/load cost estimators.

use std::hash::Hasher;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher13;

use crate::clock::SimClock;
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::types::{ChunkId, ClusterId, DataChunk, Embedding};

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_CHUNK_SIZE: usize = 512;
pub const DEFAULT_CHUNK_OVERLAP: usize = 64;

/// Coordinates touched by each token.
const TOKEN_FANOUT: usize = 8;

/// Anything that turns text into a fixed-dimension embedding.
///
/// Implementations must be deterministic per instance: the same text always
/// maps to the same vector, bit for bit.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Embedding;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub dimension: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec { dimension: DEFAULT_DIMENSION, seed: 0x5eed, normalize: true }
    }
}

/// Feature-hashing embedder. Each lowercase whitespace token is hashed with
/// the seed and scatters `±1` into a few coordinates; token vectors are summed
/// and optionally normalized. Texts sharing tokens land close together.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    spec: EmbedderSpec,
}

impl HashEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        if spec.dimension == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        Ok(HashEmbedder { spec })
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn token_seed(&self, token: &str) -> u64 {
        let mut hasher = SipHasher13::new_with_keys(self.spec.seed, 0x9e37_79b9_7f4a_7c15);
        for ch in token.chars().flat_map(char::to_lowercase) {
            let mut buf = [0u8; 4];
            hasher.write(ch.encode_utf8(&mut buf).as_bytes());
        }
        hasher.finish()
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn embed(&self, text: &str) -> Embedding {
        let dim = self.spec.dimension;
        let mut acc = vec![0.0f32; dim];
        for token in text.split_whitespace() {
            let mut rng = SplitMix64::seed_from_u64(self.token_seed(token));
            for _ in 0..TOKEN_FANOUT {
                let r = rng.next_u64();
                let idx = ((r >> 1) % dim as u64) as usize;
                acc[idx] += if r & 1 == 0 { 1.0 } else { -1.0 };
            }
        }
        if self.spec.normalize {
            let norm = acc.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                acc.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Embedding::from_finite(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCostEstimate {
    pub cluster_id: ClusterId,
    pub gen_latency: f64,
    pub total_chars: u64,
}

pub fn total_chars<'a>(chunks: impl IntoIterator<Item = &'a DataChunk>) -> u64 {
    chunks.into_iter().map(|c| c.char_len as u64).sum()
}

/// Generation latency of `total_chars` characters: `total_chars / gen_rate`.
pub fn gen_latency_for_chars(total_chars: u64, cost: &CostModel) -> f64 {
    total_chars as f64 / cost.gen_rate
}

/// Profiled generation latency of a cluster. Pure, no clock charge.
pub fn estimate_gen_latency<'a>(
    cluster_id: ClusterId,
    chunks: impl IntoIterator<Item = &'a DataChunk>,
    cost: &CostModel,
) -> GenCostEstimate {
    let total_chars = total_chars(chunks);
    GenCostEstimate { cluster_id, gen_latency: gen_latency_for_chars(total_chars, cost), total_chars }
}

/// Seconds to read `n_embeddings` stored embeddings of one cluster.
pub fn estimate_load_latency(n_embeddings: usize, cost: &CostModel) -> f64 {
    if n_embeddings == 0 {
        return 0.0;
    }
    let bytes = n_embeddings as u64 * cost.embedding_byte_size;
    cost.load_overhead + bytes as f64 / cost.load_rate
}

/// Regenerates embeddings for `chunks` (in order) and charges the clock the
/// generation latency of their total character count.
pub fn embed_cluster(
    embedder: &dyn Embedder,
    chunks: &[&DataChunk],
    cost: &CostModel,
    clock: &mut SimClock,
) -> Result<(Vec<(ChunkId, Embedding)>, f64)> {
    let embeddings = chunks.iter().map(|c| (c.id, embedder.embed(&c.text))).collect();
    let charge = gen_latency_for_chars(total_chars(chunks.iter().copied()), cost);
    clock.charge(charge)?;
    Ok((embeddings, charge))
}

/// Splits `text` into overlapping character windows of at most `size` chars.
pub fn chunk_text(text: &str, size: usize, overlap: usize) -> Result<Vec<String>> {
    if size == 0 || overlap >= size {
        return Err(Error::InvalidParameter(format!("chunk size {size} must exceed overlap {overlap}")));
    }
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Ok(Vec::new());
    }
    let stride = size - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + size).min(chars.len());
        out.push(chars[start..end].iter().collect());
        if end == chars.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}
