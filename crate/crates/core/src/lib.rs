//! Two-level (IVF) vector retrieval under a memory budget.
//!
//! Second-level embeddings are pruned at build time and regenerated on
//! demand. Clusters too expensive to regenerate within the latency objective
//! are persisted to disk, and regenerated clusters are kept in a cost-aware
//! cache with an adaptive admission threshold. All latency is simulated
//! through [`SimClock`] and [`CostModel`], so runs are fully deterministic.

pub mod cache;
pub mod clock;
pub mod cost;
pub mod embedder;
pub mod engine;
pub mod error;
pub mod index;
pub mod metrics;
pub mod storage;
pub mod types;
pub mod workload;

pub use clock::SimClock;
pub use cost::CostModel;
pub use embedder::{Embedder, EmbedderSpec, HashEmbedder};
pub use error::{Error, Result};
pub use types::{distance, ChunkId, ClusterId, DataChunk, Embedding, SearchHit};
