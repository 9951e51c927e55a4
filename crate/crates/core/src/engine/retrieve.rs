use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::{ClusterEmbeddings, EmbeddingCache};
use crate::clock::SimClock;
use crate::embedder::{embed_cluster, gen_latency_for_chars, Embedder};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::index::{merge_hits, search_cluster};
use crate::types::{ClusterId, DataChunk, Embedding, SearchHit};

/// Which retrieval configuration to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exact search over every materialized embedding.
    Flat,
    /// Two-level search with every embedding memory resident.
    Ivf,
    /// Regenerate every probed cluster.
    GenOnly,
    /// Load persisted clusters, regenerate the rest.
    GenLoad,
    /// Load persisted clusters, serve others from the cache or regenerate.
    Full,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Flat, Mode::Ivf, Mode::GenOnly, Mode::GenLoad, Mode::Full];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Flat => "flat",
            Mode::Ivf => "ivf",
            Mode::GenOnly => "gen-only",
            Mode::GenLoad => "gen-load",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidParameter(format!("unknown mode {s:?}; valid modes: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub mode: Mode,
    pub nprobe: usize,
    pub k: usize,
    /// Latency objective for `slo_met`; the cost model's SLO when `None`.
    pub slo: Option<f64>,
}

impl RetrievalConfig {
    pub fn new(mode: Mode, nprobe: usize, k: usize) -> Self {
        RetrievalConfig { mode, nprobe, k, slo: None }
    }
}

/// Where a probed cluster's embeddings came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterSource {
    Materialized,
    PersistedLoad,
    CacheHit,
    Generated,
    /// Cluster has no members; nothing to fetch.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAccess {
    pub cluster_id: ClusterId,
    pub source: ClusterSource,
    pub n_embeddings: usize,
    /// Simulated seconds spent obtaining the embeddings.
    pub cost: f64,
    /// Whether a generated cluster was admitted to the cache.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub mode: Mode,
    /// Cost of embedding the query text.
    pub query_embed_cost: f64,
    pub clusters: Vec<ClusterAccess>,
    /// Cost of level-1 and level-2 distance computations.
    pub search_cost: f64,
    /// query_embed_cost + Σ cluster costs + search_cost.
    pub total: f64,
    pub slo_met: bool,
    /// Whether any probed cluster had to be regenerated.
    pub was_miss: bool,
}

impl RetrievalTrace {
    pub fn generation_seconds(&self) -> f64 {
        self.query_embed_cost
            + self.clusters.iter().filter(|c| c.source == ClusterSource::Generated).map(|c| c.cost).sum::<f64>()
    }

    pub fn load_seconds(&self) -> f64 {
        self.clusters.iter().filter(|c| c.source == ClusterSource::PersistedLoad).map(|c| c.cost).sum()
    }
}

/// Cache access mode: the live path updates the cache, read-only only peeks.
enum CacheAccess<'a> {
    Live(&'a mut EmbeddingCache),
    ReadOnly(&'a EmbeddingCache),
}

impl Engine {
    /// Runs one query through the configured pipeline, charging the engine clock.
    pub fn retrieve(&mut self, query_text: &str, config: &RetrievalConfig) -> Result<(Vec<SearchHit>, RetrievalTrace)> {
        let mut clock = self.clock;
        let placeholder = placeholder_cache(&self.cache);
        let mut cache = std::mem::replace(&mut self.cache, placeholder);
        let result = self.retrieve_with(query_text, config, &mut clock, CacheAccess::Live(&mut cache));
        self.cache = cache;
        self.clock = clock;
        result
    }

    /// Same results and costs as [`Engine::retrieve`] against the current
    /// state, but leaves cache, threshold and clock untouched. Safe to call
    /// from several threads at once.
    pub fn retrieve_readonly(
        &self,
        query_text: &str,
        config: &RetrievalConfig,
    ) -> Result<(Vec<SearchHit>, RetrievalTrace)> {
        let mut clock = SimClock::new();
        self.retrieve_with(query_text, config, &mut clock, CacheAccess::ReadOnly(&self.cache))
    }

    fn retrieve_with(
        &self,
        query_text: &str,
        config: &RetrievalConfig,
        clock: &mut SimClock,
        mut cache: CacheAccess<'_>,
    ) -> Result<(Vec<SearchHit>, RetrievalTrace)> {
        if config.k == 0 || config.nprobe == 0 {
            return Err(Error::InvalidParameter("nprobe and k must be at least 1".into()));
        }
        let cost = self.config.cost;
        let per_distance = self.config.distance_cost;

        let query = self.embedder.embed(query_text);
        let query_embed_cost = gen_latency_for_chars(query_text.chars().count() as u64, &cost);
        clock.charge(query_embed_cost)?;

        let mut search_cost = 0.0;
        let mut accesses = Vec::new();
        let hits = if config.mode == Mode::Flat {
            let flat = self.flat_index();
            search_cost += per_distance * flat.len() as f64;
            flat.search(&query, config.k)?
        } else {
            let n_clusters = self.index.n_clusters();
            let probes = if n_clusters == 0 {
                Vec::new()
            } else {
                self.index.search_centroids(&query, config.nprobe.min(n_clusters))?
            };
            search_cost += per_distance * n_clusters as f64;
            let mut lists = Vec::with_capacity(probes.len());
            for id in probes {
                let (embeddings, access) = self.fetch_cluster(id, config.mode, clock, &mut cache)?;
                search_cost += per_distance * embeddings.len() as f64;
                lists.push(search_cluster(&embeddings, &query, config.k)?);
                accesses.push(access);
            }
            merge_hits(&lists, config.k)
        };
        clock.charge(search_cost)?;

        let mut total = query_embed_cost;
        for a in &accesses {
            total += a.cost;
        }
        total += search_cost;
        let was_miss = accesses.iter().any(|a| a.source == ClusterSource::Generated);
        if config.mode == Mode::Full {
            if let CacheAccess::Live(cache) = &mut cache {
                cache.threshold_update(was_miss, total);
            }
        }
        let slo = config.slo.unwrap_or(cost.slo);
        let trace = RetrievalTrace {
            mode: config.mode,
            query_embed_cost,
            clusters: accesses,
            search_cost,
            total,
            slo_met: total <= slo,
            was_miss,
        };
        Ok((hits, trace))
    }

    fn fetch_cluster(
        &self,
        id: ClusterId,
        mode: Mode,
        clock: &mut SimClock,
        cache: &mut CacheAccess<'_>,
    ) -> Result<(ClusterEmbeddings, ClusterAccess)> {
        let cluster = self.index.cluster(id).ok_or(Error::UnknownCluster(id))?;
        let access = |source, n, cost, cached| ClusterAccess { cluster_id: id, source, n_embeddings: n, cost, cached };
        if cluster.members.is_empty() {
            return Ok((Arc::new(Vec::new()), access(ClusterSource::Empty, 0, 0.0, false)));
        }

        if mode == Mode::Ivf {
            let all = self.materialized();
            let embs: Vec<(_, Embedding)> = cluster.members.iter().map(|m| (*m, all[m].clone())).collect();
            let n = embs.len();
            return Ok((Arc::new(embs), access(ClusterSource::Materialized, n, 0.0, false)));
        }

        if cluster.persisted && matches!(mode, Mode::GenLoad | Mode::Full) {
            let (embs, charged) = self
                .store
                .load_persisted(id, self.index.dimension(), &self.config.cost, clock)
                .map_err(|e| match e {
                    Error::NotPersisted(_) => {
                        Error::corrupt(self.store.cluster_path(id), "cluster marked persisted but file is missing")
                    }
                    other => other,
                })?;
            let n = embs.len();
            return Ok((Arc::new(embs), access(ClusterSource::PersistedLoad, n, charged, false)));
        }

        if mode == Mode::Full {
            let hit = match cache {
                CacheAccess::Live(c) => c.lookup(id),
                CacheAccess::ReadOnly(c) => c.peek(id),
            };
            if let Some(embs) = hit {
                if let CacheAccess::Live(c) = cache {
                    c.decay_counters();
                }
                let n = embs.len();
                return Ok((embs, access(ClusterSource::CacheHit, n, 0.0, false)));
            }
        }

        let members: Vec<&DataChunk> = cluster.members.iter().map(|m| &self.chunks[m]).collect();
        let (embs, charged) = embed_cluster(&self.embedder, &members, &self.config.cost, clock)?;
        let embs = Arc::new(embs);
        let mut cached = false;
        if mode == Mode::Full {
            if let CacheAccess::Live(c) = cache {
                cached = matches!(
                    c.insert(id, Arc::clone(&embs), cluster.gen_latency),
                    crate::cache::InsertOutcome::Inserted { .. }
                );
                c.decay_counters();
            }
        }
        let n = embs.len();
        Ok((embs, access(ClusterSource::Generated, n, charged, cached)))
    }
}

fn placeholder_cache(current: &EmbeddingCache) -> EmbeddingCache {
    EmbeddingCache::new(*current.config()).expect("config already validated")
}
