//! Cache of regenerated cluster embeddings.
//!
//! Eviction picks the resident with the smallest `counter × gen_latency`
//! (ties to the smaller cluster id), so entries that are both rarely used and
//! cheap to regenerate leave first. Counters start at 1, gain 1 per hit and
//! are multiplied by the decay factor once per access round. Admission is
//! gated by an adaptive [`MinLatencyThreshold`].

mod threshold;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use threshold::{MinLatencyThreshold, ThresholdRule};

use crate::error::{Error, Result};
use crate::types::{ChunkId, ClusterId, Embedding};

pub type ClusterEmbeddings = Arc<Vec<(ChunkId, Embedding)>>;

pub const DEFAULT_MEMORY_BUDGET_BYTES: u64 = 64 << 20;
pub const CACHE_BUDGET_FRACTION: f64 = 0.07;
pub const DEFAULT_DECAY_FACTOR: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Bookkeeping bytes charged per entry on top of the embedding payload.
pub const ENTRY_OVERHEAD_BYTES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub decay_factor: f64,
    pub alpha: f64,
    /// Threshold adjustment per query, seconds.
    pub step: f64,
    pub rule: ThresholdRule,
}

impl CacheConfig {
    /// Defaults for a given SLO: 7% of the default memory budget, step = slo / 100.
    pub fn for_slo(slo: f64) -> Self {
        CacheConfig {
            capacity_bytes: capacity_for_budget(DEFAULT_MEMORY_BUDGET_BYTES),
            decay_factor: DEFAULT_DECAY_FACTOR,
            alpha: DEFAULT_ALPHA,
            step: slo / 100.0,
            rule: ThresholdRule::Pseudocode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidParameter(format!("decay_factor must be in (0, 1], got {}", self.decay_factor)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be non-negative, got {}", self.step)));
        }
        Ok(())
    }
}

pub fn capacity_for_budget(memory_budget_bytes: u64) -> u64 {
    (memory_budget_bytes as f64 * CACHE_BUDGET_FRACTION) as u64
}

/// Bytes charged against the capacity for `n` embeddings of `dimension`.
pub fn entry_size(n: usize, dimension: usize) -> u64 {
    (n * dimension * 4) as u64 + ENTRY_OVERHEAD_BYTES
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub cluster_id: ClusterId,
    pub embeddings: ClusterEmbeddings,
    pub counter: f64,
    pub gen_latency: f64,
    pub size_bytes: u64,
}

impl CacheEntry {
    pub fn weight(&self) -> f64 {
        self.counter * self.gen_latency
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Inserted {
        /// Capacity evictions, in eviction order.
        evicted: Vec<ClusterId>,
        /// Residents dropped because they fell below the admission threshold.
        below_threshold: Vec<ClusterId>,
    },
    /// Generation latency below the admission threshold.
    NotAdmitted,
    /// Larger than the whole cache, or free to regenerate.
    Uncacheable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub insertions: u64,
    pub evictions: u64,
    pub threshold_evictions: u64,
    pub admissions_rejected: u64,
    pub uncacheable: u64,
    pub resident_entries: usize,
    pub resident_bytes: u64,
    pub peak_bytes: u64,
    pub threshold: f64,
    pub mov_avg_latency: f64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    config: CacheConfig,
    entries: BTreeMap<ClusterId, CacheEntry>,
    used_bytes: u64,
    threshold: MinLatencyThreshold,
    stats: CacheStats,
}

impl EmbeddingCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(EmbeddingCache {
            threshold: MinLatencyThreshold::new(config.alpha, config.step, config.rule),
            config,
            entries: BTreeMap::new(),
            used_bytes: 0,
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn threshold(&self) -> &MinLatencyThreshold {
        &self.threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn contains(&self, id: ClusterId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn entry(&self, id: ClusterId) -> Option<&CacheEntry> {
        self.entries.get(&id)
    }

    pub fn residents(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// On a hit, bumps the entry's counter and returns its embeddings.
    pub fn lookup(&mut self, id: ClusterId) -> Option<ClusterEmbeddings> {
        match self.entries.get_mut(&id) {
            Some(entry) => {
                entry.counter += 1.0;
                self.stats.hits += 1;
                Some(Arc::clone(&entry.embeddings))
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    /// Lookup without touching counters or statistics.
    pub fn peek(&self, id: ClusterId) -> Option<ClusterEmbeddings> {
        self.entries.get(&id).map(|e| Arc::clone(&e.embeddings))
    }

    pub fn admits(&self, gen_latency: f64) -> bool {
        self.threshold.admits(gen_latency)
    }

    pub fn insert(&mut self, id: ClusterId, embeddings: ClusterEmbeddings, gen_latency: f64) -> InsertOutcome {
        if !self.admits(gen_latency) {
            self.stats.admissions_rejected += 1;
            return InsertOutcome::NotAdmitted;
        }
        let dimension = embeddings.first().map_or(0, |(_, e)| e.dim());
        let size = entry_size(embeddings.len(), dimension);
        if size > self.config.capacity_bytes || gen_latency <= 0.0 {
            self.stats.uncacheable += 1;
            return InsertOutcome::Uncacheable;
        }
        self.invalidate(id);

        let below_threshold = self.evict_below_threshold();
        let mut evicted = Vec::new();
        while self.used_bytes + size > self.config.capacity_bytes {
            let victim = self.min_weight_resident().expect("over capacity implies residents");
            self.remove(victim);
            self.stats.evictions += 1;
            evicted.push(victim);
        }

        self.entries.insert(id, CacheEntry { cluster_id: id, embeddings, counter: 1.0, gen_latency, size_bytes: size });
        self.used_bytes += size;
        self.stats.insertions += 1;
        self.stats.peak_bytes = self.stats.peak_bytes.max(self.used_bytes);
        InsertOutcome::Inserted { evicted, below_threshold }
    }

    /// The resident with minimum `counter × gen_latency`, ties to the smaller id.
    pub fn min_weight_resident(&self) -> Option<ClusterId> {
        self.entries
            .values()
            .min_by(|a, b| a.weight().total_cmp(&b.weight()).then(a.cluster_id.cmp(&b.cluster_id)))
            .map(|e| e.cluster_id)
    }

    /// Drops residents whose generation latency is now below the threshold.
    pub fn evict_below_threshold(&mut self) -> Vec<ClusterId> {
        let value = self.threshold.value;
        let victims: Vec<ClusterId> =
            self.entries.values().filter(|e| e.gen_latency < value).map(|e| e.cluster_id).collect();
        for &v in &victims {
            self.remove(v);
            self.stats.threshold_evictions += 1;
        }
        victims
    }

    /// Multiplies every resident counter by the decay factor.
    pub fn decay_counters(&mut self) {
        let f = self.config.decay_factor;
        for e in self.entries.values_mut() {
            e.counter *= f;
        }
    }

    pub fn threshold_update(&mut self, was_miss: bool, last_latency: f64) {
        self.threshold.update(was_miss, last_latency);
    }

    /// Removes an entry whose cluster changed. Not counted as an eviction.
    pub fn invalidate(&mut self, id: ClusterId) -> bool {
        self.remove(id)
    }

    fn remove(&mut self, id: ClusterId) -> bool {
        match self.entries.remove(&id) {
            Some(e) => {
                self.used_bytes -= e.size_bytes;
                true
            }
            None => false,
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            resident_entries: self.entries.len(),
            resident_bytes: self.used_bytes,
            threshold: self.threshold.value,
            mov_avg_latency: self.threshold.mov_avg_latency,
            ..self.stats
        }
    }
}
