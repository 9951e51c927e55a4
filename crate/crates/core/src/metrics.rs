//! Aggregation of per-query traces into a report.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::engine::{ClusterSource, Engine, Mode, RetrievalConfig, RetrievalTrace};
use crate::error::Result;
use crate::types::{ChunkId, ClusterId, SearchHit};
use crate::workload::QueryRecord;

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p / 100 × n)`. Returns 0 for an empty slice.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Fraction of `truth` found in `retrieved`. An empty truth set counts as 1.
pub fn recall_at_k(retrieved: &[ChunkId], truth: &[ChunkId]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let got: BTreeSet<&ChunkId> = retrieved.iter().collect();
    truth.iter().filter(|t| got.contains(t)).count() as f64 / truth.len() as f64
}

/// Estimated bytes held in memory for `mode`: centroids, chunk references,
/// and either every embedding (flat/ivf) or the cache's peak footprint (full).
pub fn resident_memory_bytes(engine: &Engine, mode: Mode) -> u64 {
    let dim_bytes = engine.config().cost.embedding_byte_size;
    let index = engine.index();
    let base = index.n_clusters() as u64 * dim_bytes + index.n_chunks() as u64 * 8;
    match mode {
        Mode::Flat | Mode::Ivf => base + index.n_chunks() as u64 * dim_bytes,
        Mode::Full => base + engine.cache().stats().peak_bytes,
        Mode::GenOnly | Mode::GenLoad => base,
    }
}

/// Recall of `hits` for `query`: against its relevant record ids when the
/// trace supplies them, otherwise against the exact top-k.
pub fn query_recall(engine: &Engine, query: &QueryRecord, hits: &[SearchHit], k: usize) -> Result<f64> {
    match &query.relevant_ids {
        Some(relevant) => {
            let found: BTreeSet<&str> = hits.iter().filter_map(|h| engine.source_of(h.chunk_id)).collect();
            let relevant: BTreeSet<&str> = relevant.iter().map(String::as_str).collect();
            if relevant.is_empty() {
                return Ok(1.0);
            }
            Ok(relevant.iter().filter(|r| found.contains(*r)).count() as f64 / relevant.len() as f64)
        }
        None => {
            let query_vec = engine.embedder().embed(&query.text);
            let truth: Vec<ChunkId> = engine.flat_index().search(&query_vec, k)?.iter().map(|h| h.chunk_id).collect();
            let got: Vec<ChunkId> = hits.iter().map(|h| h.chunk_id).collect();
            Ok(recall_at_k(&got, &truth))
        }
    }
}

/// Per-query result of a replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub qid: String,
    pub hits: Vec<ChunkId>,
    pub latency: f64,
    pub recall: f64,
}

/// Replays `trace` in order against the live engine state.
pub fn replay(
    engine: &mut Engine,
    trace: &[QueryRecord],
    config: &RetrievalConfig,
) -> Result<(MetricsReport, Vec<QueryOutcome>)> {
    let slo = config.slo.unwrap_or(engine.config().cost.slo);
    let mut builder = ReportBuilder::new(config.mode, config.nprobe, config.k, slo);
    let mut outcomes = Vec::with_capacity(trace.len());
    for q in trace {
        let (hits, t) = engine.retrieve(&q.text, config)?;
        let recall = query_recall(engine, q, &hits, config.k)?;
        builder.record(&t, Some(recall));
        outcomes.push(QueryOutcome {
            qid: q.qid.clone(),
            hits: hits.iter().map(|h| h.chunk_id).collect(),
            latency: t.total,
            recall,
        });
    }
    let cache = (config.mode == Mode::Full).then(|| engine.cache().stats());
    Ok((builder.finish(resident_memory_bytes(engine, config.mode), cache), outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub nprobe: usize,
    pub k: usize,
    pub n_queries: usize,
    /// Mean recall@k against the ground truth, when one was supplied.
    pub recall_at_k: Option<f64>,
    pub latencies: Vec<f64>,
    pub mean_latency: f64,
    pub p50_latency: f64,
    pub p95_latency: f64,
    pub p99_latency: f64,
    pub max_latency: f64,
    /// Largest single-cluster fetch cost seen.
    pub max_cluster_cost: f64,
    pub slo: f64,
    pub slo_violations: usize,
    pub total_generation_seconds: f64,
    pub total_load_seconds: f64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_rate: f64,
    pub unique_cluster_accesses: usize,
    pub total_cluster_accesses: usize,
    pub reuse_ratio: f64,
    pub resident_memory_bytes: u64,
    pub cache: Option<CacheStats>,
}

/// Accumulates traces one query at a time.
#[derive(Debug, Clone)]
pub struct ReportBuilder {
    mode: Mode,
    nprobe: usize,
    k: usize,
    slo: f64,
    latencies: Vec<f64>,
    recall_sum: f64,
    recall_n: usize,
    slo_violations: usize,
    generation: f64,
    load: f64,
    hits: u64,
    misses: u64,
    max_cluster_cost: f64,
    unique: BTreeSet<ClusterId>,
    total_accesses: usize,
}

impl ReportBuilder {
    pub fn new(mode: Mode, nprobe: usize, k: usize, slo: f64) -> Self {
        ReportBuilder {
            mode,
            nprobe,
            k,
            slo,
            latencies: Vec::new(),
            recall_sum: 0.0,
            recall_n: 0,
            slo_violations: 0,
            generation: 0.0,
            load: 0.0,
            hits: 0,
            misses: 0,
            max_cluster_cost: 0.0,
            unique: BTreeSet::new(),
            total_accesses: 0,
        }
    }

    pub fn record(&mut self, trace: &RetrievalTrace, recall: Option<f64>) {
        self.latencies.push(trace.total);
        if trace.total > self.slo {
            self.slo_violations += 1;
        }
        self.generation += trace.generation_seconds();
        self.load += trace.load_seconds();
        for c in &trace.clusters {
            self.total_accesses += 1;
            self.unique.insert(c.cluster_id);
            self.max_cluster_cost = self.max_cluster_cost.max(c.cost);
            match c.source {
                ClusterSource::CacheHit => self.hits += 1,
                ClusterSource::Generated => self.misses += 1,
                _ => {}
            }
        }
        if let Some(r) = recall {
            self.recall_sum += r;
            self.recall_n += 1;
        }
    }

    pub fn finish(self, resident_memory_bytes: u64, cache: Option<CacheStats>) -> MetricsReport {
        let mut sorted = self.latencies.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = if n == 0 { 0.0 } else { self.latencies.iter().sum::<f64>() / n as f64 };
        let lookups = self.hits + self.misses;
        MetricsReport {
            mode: self.mode,
            nprobe: self.nprobe,
            k: self.k,
            n_queries: n,
            recall_at_k: (self.recall_n > 0).then(|| self.recall_sum / self.recall_n as f64),
            mean_latency: mean,
            p50_latency: percentile_nearest_rank(&sorted, 50.0),
            p95_latency: percentile_nearest_rank(&sorted, 95.0),
            p99_latency: percentile_nearest_rank(&sorted, 99.0),
            max_latency: sorted.last().copied().unwrap_or(0.0),
            latencies: self.latencies,
            max_cluster_cost: self.max_cluster_cost,
            slo: self.slo,
            slo_violations: self.slo_violations,
            total_generation_seconds: self.generation,
            total_load_seconds: self.load,
            cache_hits: self.hits,
            cache_misses: self.misses,
            cache_hit_rate: if lookups == 0 { 0.0 } else { self.hits as f64 / lookups as f64 },
            unique_cluster_accesses: self.unique.len(),
            total_cluster_accesses: self.total_accesses,
            reuse_ratio: if self.unique.is_empty() {
                0.0
            } else {
                self.total_accesses as f64 / self.unique.len() as f64
            },
            resident_memory_bytes,
            cache,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ClusterAccess;

    #[test]
    fn nearest_rank_definition() {
        let v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(percentile_nearest_rank(&v, 50.0), 10.0);
        assert_eq!(percentile_nearest_rank(&v, 95.0), 19.0);
        assert_eq!(percentile_nearest_rank(&v, 99.0), 20.0);
        assert_eq!(percentile_nearest_rank(&v, 100.0), 20.0);
        assert_eq!(percentile_nearest_rank(&v, 0.0), 1.0);
        assert_eq!(percentile_nearest_rank(&[7.0], 50.0), 7.0);
        assert_eq!(percentile_nearest_rank(&[], 50.0), 0.0);
        let five = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile_nearest_rank(&five, 30.0), 20.0);
        assert_eq!(percentile_nearest_rank(&five, 40.0), 20.0);
        assert_eq!(percentile_nearest_rank(&five, 50.0), 35.0);
    }

    #[test]
    fn recall_counts_overlap() {
        let ids = |v: &[u64]| v.iter().map(|&i| ChunkId(i)).collect::<Vec<_>>();
        assert_eq!(recall_at_k(&ids(&[1, 2, 3]), &ids(&[3, 4])), 0.5);
        assert_eq!(recall_at_k(&ids(&[]), &ids(&[])), 1.0);
        assert_eq!(recall_at_k(&ids(&[9]), &ids(&[9])), 1.0);
    }

    fn trace(total: f64, clusters: &[(u32, ClusterSource, f64)]) -> RetrievalTrace {
        RetrievalTrace {
            mode: Mode::Full,
            query_embed_cost: 0.01,
            clusters: clusters
                .iter()
                .map(|&(id, source, cost)| ClusterAccess {
                    cluster_id: ClusterId(id),
                    source,
                    n_embeddings: 1,
                    cost,
                    cached: false,
                })
                .collect(),
            search_cost: 0.0,
            total,
            slo_met: true,
            was_miss: false,
        }
    }

    #[test]
    fn reuse_ratio_and_hit_rate() {
        let mut b = ReportBuilder::new(Mode::Full, 2, 5, 1.0);
        b.record(&trace(0.5, &[(1, ClusterSource::Generated, 0.4), (2, ClusterSource::PersistedLoad, 0.09)]), None);
        b.record(&trace(2.0, &[(1, ClusterSource::CacheHit, 0.0), (3, ClusterSource::Generated, 1.99)]), Some(0.5));
        let r = b.finish(100, None);
        assert_eq!(r.total_cluster_accesses, 4);
        assert_eq!(r.unique_cluster_accesses, 3);
        assert_eq!(r.reuse_ratio, 4.0 / 3.0);
        assert_eq!(r.cache_hits, 1);
        assert_eq!(r.cache_misses, 2);
        assert_eq!(r.cache_hit_rate, 1.0 / 3.0);
        assert_eq!(r.slo_violations, 1);
        assert_eq!(r.recall_at_k, Some(0.5));
        assert_eq!(r.max_cluster_cost, 1.99);
        assert_eq!(r.total_load_seconds, 0.09);
        assert_eq!(r.total_generation_seconds, (0.01 + 0.4) + (0.01 + 1.99));
        assert_eq!(r.p50_latency, 0.5);
        assert_eq!(r.max_latency, 2.0);
    }
}
