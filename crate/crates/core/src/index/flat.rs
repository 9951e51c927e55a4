use crate::embedder::Embedder;
use crate::error::{Error, Result};
use crate::index::topk::{check_k, top_k};
use crate::types::{l2_squared, ChunkId, DataChunk, Embedding, SearchHit};

/// Brute-force index over every chunk embedding. Ground truth for recall.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dimension: usize,
    entries: Vec<(ChunkId, Embedding)>,
}

impl FlatIndex {
    pub fn build(chunks: &[DataChunk], embedder: &dyn Embedder) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let entries = chunks.iter().map(|c| (c.id, embedder.embed(&c.text))).collect();
        Self::from_entries(embedder.dimension(), entries)
    }

    pub fn from_entries(dimension: usize, entries: Vec<(ChunkId, Embedding)>) -> Result<Self> {
        if let Some((_, e)) = entries.iter().find(|(_, e)| e.dim() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, actual: e.dim() });
        }
        Ok(FlatIndex { dimension, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(ChunkId, Embedding)] {
        &self.entries
    }

    /// The `k` globally nearest entries. `k` above the index size returns everything.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<SearchHit>> {
        check_k(k)?;
        if query.dim() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, actual: query.dim() });
        }
        Ok(top_k(
            self.entries
                .iter()
                .map(|(id, e)| SearchHit { chunk_id: *id, distance: l2_squared(e.as_slice(), query.as_slice()) }),
            k,
        ))
    }
}
