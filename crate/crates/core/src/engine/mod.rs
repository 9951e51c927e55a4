//! The retrieval engine: owns the index, chunk table, store, cache and clock.

mod mutation;
mod retrieve;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use retrieve::{ClusterAccess, ClusterSource, Mode, RetrievalConfig, RetrievalTrace};

use crate::cache::{CacheConfig, EmbeddingCache};
use crate::clock::SimClock;
use crate::cost::CostModel;
use crate::embedder::{Embedder, EmbedderSpec, HashEmbedder};
use crate::error::{Error, Result};
use crate::index::{FlatIndex, IvfIndex, IvfParams};
use crate::storage::{profile_and_persist, ChunkRecord, ClusterStore, IndexManifest, PersistenceDecision};
use crate::types::{ChunkId, ChunkTable, DataChunk, Embedding};

pub const DEFAULT_SPLIT_FACTOR: f64 = 4.0;
pub const DEFAULT_MERGE_FACTOR: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub embedder: EmbedderSpec,
    pub cost: CostModel,
    pub ivf: IvfParams,
    pub cache: CacheConfig,
    /// Split a cluster whose character mass exceeds this multiple of the build-time average.
    pub split_factor: f64,
    /// Merge a cluster whose character mass drops below this multiple of the build-time average.
    pub merge_factor: f64,
    /// Simulated seconds per distance computation. Zero by default.
    pub distance_cost: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::for_embedder(EmbedderSpec::default())
    }
}

impl EngineConfig {
    /// Defaults with the cost model calibrated to `embedder`'s dimension.
    pub fn for_embedder(embedder: EmbedderSpec) -> Self {
        let cost = CostModel::calibrated(embedder.dimension);
        EngineConfig {
            embedder,
            cost,
            ivf: IvfParams::default(),
            cache: CacheConfig::for_slo(cost.slo),
            split_factor: DEFAULT_SPLIT_FACTOR,
            merge_factor: DEFAULT_MERGE_FACTOR,
            distance_cost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.cache.validate()?;
        if self.cost.embedding_byte_size != 4 * self.embedder.dimension as u64 {
            return Err(Error::InvalidParameter(format!(
                "embedding_byte_size {} does not match dimension {}",
                self.cost.embedding_byte_size, self.embedder.dimension
            )));
        }
        if !(self.split_factor > 0.0 && self.merge_factor >= 0.0 && self.merge_factor < self.split_factor) {
            return Err(Error::InvalidParameter("need 0 <= merge_factor < split_factor".into()));
        }
        if !self.distance_cost.is_finite() || self.distance_cost < 0.0 {
            return Err(Error::InvalidParameter("distance_cost must be non-negative".into()));
        }
        Ok(())
    }
}

/// Summary of a build, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub n_chunks: usize,
    pub n_clusters: usize,
    pub persisted_clusters: usize,
    pub stored_embedding_bytes: u64,
    pub pruned_embedding_bytes: u64,
    pub decisions: Vec<PersistenceDecision>,
}

pub struct Engine {
    config: EngineConfig,
    embedder: HashEmbedder,
    chunks: ChunkTable,
    sources: BTreeMap<ChunkId, String>,
    index: IvfIndex,
    store: ClusterStore,
    cache: EmbeddingCache,
    clock: SimClock,
    split_threshold_chars: f64,
    merge_threshold_chars: f64,
    materialized: OnceLock<BTreeMap<ChunkId, Embedding>>,
    flat: OnceLock<FlatIndex>,
    build_summary: Option<BuildSummary>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("chunks", &self.chunks.len())
            .field("clusters", &self.index.n_clusters())
            .field("store", &self.store.root())
            .field("clock", &self.clock.now())
            .finish()
    }
}

impl Engine {
    /// Indexes `records` into `store_dir`: embed, cluster, profile, persist
    /// over-SLO clusters, then write chunk texts and finally the manifest.
    pub fn build(records: Vec<ChunkRecord>, config: EngineConfig, store_dir: impl AsRef<Path>) -> Result<Engine> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        config.validate()?;
        let embedder = HashEmbedder::new(config.embedder)?;
        let store = ClusterStore::create(store_dir.as_ref())?;
        clear_store(&store)?;

        let chunk_list: Vec<DataChunk> = records.iter().map(|r| DataChunk::new(r.id, r.text.clone())).collect();
        let mut index = IvfIndex::build(&chunk_list, &embedder, config.ivf, &config.cost)?;
        let chunks: ChunkTable = chunk_list.into_iter().map(|c| (c.id, c)).collect();

        let total_chars: u64 = chunks.values().map(|c| c.char_len as u64).sum();
        let avg_mass = total_chars as f64 / index.n_clusters() as f64;
        let decisions = profile_and_persist(&mut index, &chunks, &embedder, &config.cost, &store)?;

        let mut engine = Engine {
            sources: records.iter().map(|r| (r.id, r.source.clone())).collect(),
            cache: EmbeddingCache::new(config.cache)?,
            config,
            embedder,
            chunks,
            index,
            store,
            clock: SimClock::new(),
            split_threshold_chars: config.split_factor * avg_mass,
            merge_threshold_chars: config.merge_factor * avg_mass,
            materialized: OnceLock::new(),
            flat: OnceLock::new(),
            build_summary: None,
        };
        engine.sync()?;
        engine.build_summary = Some(engine.summarize(decisions));
        Ok(engine)
    }

    /// Convenience for chunks without a separate source id.
    pub fn build_from_chunks(
        chunks: Vec<DataChunk>,
        config: EngineConfig,
        store_dir: impl AsRef<Path>,
    ) -> Result<Engine> {
        let records =
            chunks.into_iter().map(|c| ChunkRecord { id: c.id, source: c.id.to_string(), text: c.text }).collect();
        Engine::build(records, config, store_dir)
    }

    /// Reopens a built store. Embedder, cost model and index come from the
    /// manifest; the cache starts empty with `cache` settings.
    pub fn open(store_dir: impl AsRef<Path>, cache: CacheConfig) -> Result<Engine> {
        let store = ClusterStore::open(store_dir.as_ref())?;
        let manifest = store.read_manifest()?;
        let index = manifest.to_index().map_err(|e| match e {
            Error::Corrupt { .. } => e,
            other => Error::corrupt(store.manifest_path(), other.to_string()),
        })?;
        let records = store.read_chunks()?;
        let chunks: ChunkTable = records.iter().map(|r| (r.id, DataChunk::new(r.id, r.text.clone()))).collect();
        if chunks.len() != records.len() || !index.is_partition_of(chunks.keys().copied()) {
            return Err(Error::corrupt(
                store.root().join(crate::storage::CHUNKS_FILE),
                "chunk table does not match the manifest's cluster membership",
            ));
        }
        let config = EngineConfig {
            embedder: manifest.embedder,
            cost: manifest.cost_model,
            ivf: manifest.params,
            cache,
            ..EngineConfig::for_embedder(manifest.embedder)
        };
        config.validate()?;
        Ok(Engine {
            embedder: HashEmbedder::new(manifest.embedder)?,
            sources: records.into_iter().map(|r| (r.id, r.source)).collect(),
            cache: EmbeddingCache::new(cache)?,
            config,
            chunks,
            index,
            store,
            clock: SimClock::new(),
            split_threshold_chars: manifest.split_threshold_chars,
            merge_threshold_chars: manifest.merge_threshold_chars,
            materialized: OnceLock::new(),
            flat: OnceLock::new(),
            build_summary: None,
        })
    }

    /// Writes chunk texts and then the manifest, making the on-disk store
    /// reflect the current index.
    pub fn sync(&self) -> Result<()> {
        let records: Vec<ChunkRecord> = self
            .chunks
            .values()
            .map(|c| ChunkRecord {
                id: c.id,
                source: self.sources.get(&c.id).cloned().unwrap_or_else(|| c.id.to_string()),
                text: c.text.clone(),
            })
            .collect();
        self.store.write_chunks(&records)?;
        self.store.write_manifest(&self.manifest())
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest::from_index(
            &self.index,
            self.config.embedder,
            self.config.cost,
            self.split_threshold_chars,
            self.merge_threshold_chars,
        )
    }

    fn summarize(&self, decisions: Vec<PersistenceDecision>) -> BuildSummary {
        let per = self.config.cost.embedding_byte_size;
        let mut stored = 0u64;
        let mut pruned = 0u64;
        for c in self.index.clusters() {
            let bytes = c.members.len() as u64 * per;
            if c.persisted {
                stored += bytes;
            } else {
                pruned += bytes;
            }
        }
        BuildSummary {
            n_chunks: self.chunks.len(),
            n_clusters: self.index.n_clusters(),
            persisted_clusters: self.index.clusters().filter(|c| c.persisted).count(),
            stored_embedding_bytes: stored,
            pruned_embedding_bytes: pruned,
            decisions,
        }
    }

    pub fn build_summary(&self) -> BuildSummary {
        self.build_summary.clone().unwrap_or_else(|| {
            let decisions = self
                .index
                .clusters()
                .map(|c| PersistenceDecision {
                    cluster_id: c.cluster_id,
                    gen_latency: c.gen_latency,
                    persisted: c.persisted,
                })
                .collect();
            self.summarize(decisions)
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn Embedder {
        &self.embedder
    }

    pub fn index(&self) -> &IvfIndex {
        &self.index
    }

    pub fn chunks(&self) -> &ChunkTable {
        &self.chunks
    }

    pub fn source_of(&self, chunk: ChunkId) -> Option<&str> {
        self.sources.get(&chunk).map(String::as_str)
    }

    pub fn store(&self) -> &ClusterStore {
        &self.store
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Replaces the cache, dropping all resident entries and statistics.
    pub fn reset_cache(&mut self, config: CacheConfig) -> Result<()> {
        self.cache = EmbeddingCache::new(config)?;
        self.config.cache = config;
        Ok(())
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn set_distance_cost(&mut self, seconds: f64) -> Result<()> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::InvalidParameter("distance_cost must be non-negative".into()));
        }
        self.config.distance_cost = seconds;
        Ok(())
    }

    pub fn split_threshold_chars(&self) -> f64 {
        self.split_threshold_chars
    }

    pub fn merge_threshold_chars(&self) -> f64 {
        self.merge_threshold_chars
    }

    /// Every chunk embedding, computed once on first use (not charged).
    pub fn materialized(&self) -> &BTreeMap<ChunkId, Embedding> {
        self.materialized.get_or_init(|| self.chunks.values().map(|c| (c.id, self.embedder.embed(&c.text))).collect())
    }

    /// Exact index over every chunk, built on first use (not charged).
    pub fn flat_index(&self) -> &FlatIndex {
        self.flat.get_or_init(|| {
            let entries = self.materialized().iter().map(|(id, e)| (*id, e.clone())).collect();
            FlatIndex::from_entries(self.index.dimension(), entries).expect("embedder dimension is fixed")
        })
    }

    /// True when every cluster satisfies persisted ⇔ gen_latency > slo on disk.
    pub fn audit_persistence(&self) -> Result<Vec<String>> {
        crate::storage::audit_persistence(&self.index, &self.config.cost, &self.store)
    }
}

/// Removes a previous build's manifest first, then its cluster files.
fn clear_store(store: &ClusterStore) -> Result<()> {
    let manifest = store.manifest_path();
    if manifest.exists() {
        fs::remove_file(&manifest).map_err(|e| Error::io(format!("removing {}", manifest.display()), e))?;
    }
    for id in store.stored_clusters()? {
        store.remove_cluster(id)?;
    }
    Ok(())
}
