use std::fs;

use lazyrag::cache::{CacheConfig, ThresholdRule};
use lazyrag::embedder::{estimate_load_latency, gen_latency_for_chars};
use lazyrag::engine::{ClusterSource, Engine, EngineConfig, Mode, RetrievalConfig};
use lazyrag::index::IvfParams;
use lazyrag::storage::ChunkRecord;
use lazyrag::{ChunkId, ClusterId, Error};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const CHARS: usize = 512;

/// Text of exactly `CHARS` characters drawn from one topic's vocabulary.
fn topic_text(topic: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    while s.len() < CHARS {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(&format!("{topic}{}", rng.gen_range(0..30)));
    }
    s.truncate(CHARS);
    s
}

/// Two well separated topics with `a` and `b` chunks.
fn two_topics(a: usize, b: usize) -> Vec<ChunkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    for (topic, n) in [("apple", a), ("zebra", b)] {
        for _ in 0..n {
            let id = ChunkId(out.len() as u64);
            out.push(ChunkRecord { id, source: format!("{topic}-{}", id.0), text: topic_text(topic, &mut rng) });
        }
    }
    out
}

fn many_topics(n_topics: usize, per: usize) -> Vec<ChunkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    for t in 0..n_topics {
        let n = per + t % 5;
        for _ in 0..n {
            let id = ChunkId(out.len() as u64);
            out.push(ChunkRecord { id, source: "doc".into(), text: topic_text(&format!("t{t}w"), &mut rng) });
        }
    }
    out.shuffle(&mut rng);
    out
}

fn config_with_k(k: usize) -> EngineConfig {
    EngineConfig { ivf: IvfParams { n_clusters: Some(k), ..IvfParams::default() }, ..EngineConfig::default() }
}

fn unbounded_cache(slo: f64) -> CacheConfig {
    CacheConfig { capacity_bytes: u64::MAX, rule: ThresholdRule::Fixed, ..CacheConfig::for_slo(slo) }
}

fn cluster_of_topic(engine: &Engine, first: u64) -> ClusterId {
    engine.index().cluster_of(ChunkId(first)).unwrap()
}

#[test]
fn exact_query_ranks_its_chunk_first() {
    let dir = TempDir::new().unwrap();
    let records = many_topics(12, 10);
    let mut engine = Engine::build(records.clone(), EngineConfig::default(), dir.path()).unwrap();
    for mode in Mode::ALL {
        for r in records.iter().take(20) {
            let (hits, _) = engine.retrieve(&r.text, &RetrievalConfig::new(mode, 2, 3)).unwrap();
            assert_eq!(hits[0].chunk_id, r.id, "{mode}");
            assert_eq!(hits[0].distance, 0.0);
        }
    }
}

#[test]
fn all_ivf_modes_return_identical_hits() {
    let dir = TempDir::new().unwrap();
    let records = many_topics(15, 8);
    let mut engine = Engine::build(records, EngineConfig::default(), dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let q: Vec<String> = (0..6).map(|_| format!("t{}w{}", rng.gen_range(0..15), rng.gen_range(0..30))).collect();
        let q = q.join(" ");
        let cfg = |m| RetrievalConfig::new(m, 3, 10);
        let (base, _) = engine.retrieve(&q, &cfg(Mode::Ivf)).unwrap();
        for mode in [Mode::GenOnly, Mode::GenLoad, Mode::Full] {
            let (hits, _) = engine.retrieve(&q, &cfg(mode)).unwrap();
            assert_eq!(hits, base, "{mode}");
        }
    }
}

#[test]
fn latency_accounting_is_exact() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(many_topics(10, 9), EngineConfig::default(), dir.path()).unwrap();
    engine.set_distance_cost(1e-6).unwrap();
    let start = engine.clock().now();
    assert_eq!(start, 0.0);
    let query = "t3w1 t3w2 t7w5";
    let (_, trace) = engine.retrieve(query, &RetrievalConfig::new(Mode::GenLoad, 3, 5)).unwrap();
    let mut expected = trace.query_embed_cost;
    for c in &trace.clusters {
        expected += c.cost;
    }
    expected += trace.search_cost;
    assert_eq!(trace.total, expected);
    assert_eq!(trace.query_embed_cost, gen_latency_for_chars(query.chars().count() as u64, &engine.config().cost));
    assert!((engine.clock().now() - trace.total).abs() < 1e-12);
    let scanned: usize = trace.clusters.iter().map(|c| c.n_embeddings).sum();
    let expected_search = 1e-6 * (engine.index().n_clusters() + scanned) as f64;
    assert!((trace.search_cost - expected_search).abs() < 1e-15);
    for c in &trace.clusters {
        let cluster = engine.index().cluster(c.cluster_id).unwrap();
        match c.source {
            ClusterSource::Generated => {
                assert!(!cluster.persisted);
                assert!((c.cost - cluster.gen_latency).abs() < 1e-12);
            }
            ClusterSource::PersistedLoad => {
                assert!(cluster.persisted);
                assert_eq!(c.cost, estimate_load_latency(c.n_embeddings, &engine.config().cost));
                assert!(c.cost < cluster.gen_latency);
            }
            other => panic!("unexpected source {other:?}"),
        }
    }
}

#[test]
fn generation_never_exceeds_slo_per_cluster_in_load_modes() {
    let dir = TempDir::new().unwrap();
    let records = two_topics(30, 80);
    let mut engine = Engine::build(records, config_with_k(2), dir.path()).unwrap();
    let slo = engine.config().cost.slo;
    for mode in [Mode::GenLoad, Mode::Full] {
        for q in ["apple1 apple2", "zebra4 zebra9"] {
            let (_, trace) = engine.retrieve(q, &RetrievalConfig::new(mode, 2, 5)).unwrap();
            for c in trace.clusters.iter().filter(|c| c.source == ClusterSource::Generated) {
                assert!(c.cost <= slo);
            }
        }
    }
    let (_, trace) = engine.retrieve("zebra1", &RetrievalConfig::new(Mode::GenOnly, 1, 5)).unwrap();
    assert!(trace.clusters[0].cost > slo);
}

#[test]
fn repeated_queries_hit_an_unbounded_cache() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(many_topics(20, 6), EngineConfig::default(), dir.path()).unwrap();
    let slo = engine.config().cost.slo;
    engine.reset_cache(unbounded_cache(slo)).unwrap();
    let queries: Vec<String> = (0..20).map(|t| format!("t{t}w1 t{t}w2 t{t}w3")).collect();
    let cfg = RetrievalConfig::new(Mode::Full, 2, 5);
    let first: Vec<f64> = queries.iter().map(|q| engine.retrieve(q, &cfg).unwrap().1.total).collect();
    for (q, before) in queries.iter().zip(&first) {
        let (_, trace) = engine.retrieve(q, &cfg).unwrap();
        assert!(trace.clusters.iter().all(|c| c.source != ClusterSource::Generated));
        assert!(!trace.was_miss);
        assert!(trace.total <= *before);
    }
    assert!(engine.cache().stats().hits > 0);
    assert_eq!(engine.cache().stats().evictions, 0);
}

#[test]
fn readonly_retrieval_leaves_state_alone() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(many_topics(10, 6), EngineConfig::default(), dir.path()).unwrap();
    let cfg = RetrievalConfig::new(Mode::Full, 2, 5);
    let (a, ta) = engine.retrieve_readonly("t1w1 t1w4", &cfg).unwrap();
    assert!(engine.cache().is_empty());
    assert_eq!(engine.clock().now(), 0.0);
    let (b, tb) = engine.retrieve("t1w1 t1w4", &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.total, tb.total);
}

#[test]
fn insert_crossing_slo_persists_cluster() {
    let dir = TempDir::new().unwrap();
    let config = EngineConfig { split_factor: 100.0, ..config_with_k(2) };
    let mut engine = Engine::build(two_topics(40, 60), config, dir.path()).unwrap();
    let a = cluster_of_topic(&engine, 0);
    assert!(!engine.index().cluster(a).unwrap().persisted);
    assert!(!engine.store().has_cluster(a));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..8 {
        let id = ChunkId(1000 + i);
        let got =
            engine.insert_chunk(ChunkRecord { id, source: "new".into(), text: topic_text("apple", &mut rng) }).unwrap();
        assert_eq!(got, a);
    }
    let cluster = engine.index().cluster(a).unwrap();
    assert_eq!(cluster.members.len(), 48);
    assert!(cluster.gen_latency > engine.config().cost.slo);
    assert!(cluster.persisted);
    assert!(engine.store().has_cluster(a));
    assert!(engine.audit_persistence().unwrap().is_empty());
    assert!(matches!(
        engine.insert_chunk(ChunkRecord { id: ChunkId(1000), source: String::new(), text: "x".into() }),
        Err(Error::DuplicateChunk(_))
    ));
}

#[test]
fn removal_below_slo_deletes_stored_embeddings() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(two_topics(40, 60), config_with_k(2), dir.path()).unwrap();
    let b = cluster_of_topic(&engine, 40);
    assert!(engine.store().has_cluster(b));
    for id in 40..54 {
        engine.remove_chunk(ChunkId(id)).unwrap();
    }
    assert_eq!(engine.index().cluster(b).unwrap().members.len(), 46);
    assert!(!engine.index().cluster(b).unwrap().persisted);
    assert!(!engine.store().has_cluster(b));
    assert!(engine.audit_persistence().unwrap().is_empty());
    assert!(matches!(engine.remove_chunk(ChunkId(40)), Err(Error::UnknownChunk(_))));
}

#[test]
fn oversized_cluster_splits() {
    let dir = TempDir::new().unwrap();
    let config = EngineConfig { split_factor: 1.2, ..config_with_k(2) };
    let mut engine = Engine::build(two_topics(30, 30), config, dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ids: Vec<ChunkId> = engine.chunks().keys().copied().collect();
    for i in 0..10 {
        let id = ChunkId(500 + i);
        engine.insert_chunk(ChunkRecord { id, source: "n".into(), text: topic_text("apple", &mut rng) }).unwrap();
        ids.push(id);
    }
    assert_eq!(engine.index().n_clusters(), 3);
    assert!(engine.index().is_partition_of(ids.iter().copied()));
    assert!(engine.audit_persistence().unwrap().is_empty());
    for c in engine.index().clusters() {
        assert!(c.total_chars as f64 <= engine.split_threshold_chars());
    }
    let (hits, _) = engine.retrieve("apple3 apple4", &RetrievalConfig::new(Mode::Full, 3, 5)).unwrap();
    assert_eq!(hits.len(), 5);
}

#[test]
fn shrinking_cluster_merges_into_neighbour() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(two_topics(40, 60), config_with_k(2), dir.path()).unwrap();
    let a = cluster_of_topic(&engine, 0);
    for id in 0..35 {
        engine.remove_chunk(ChunkId(id)).unwrap();
    }
    assert_eq!(engine.index().n_clusters(), 1);
    assert!(engine.index().cluster(a).is_none());
    assert!(engine.index().is_partition_of((35..100).map(ChunkId)));
    assert!(engine.audit_persistence().unwrap().is_empty());
    let (hits, _) = engine.retrieve("apple1", &RetrievalConfig::new(Mode::GenLoad, 1, 3)).unwrap();
    assert_eq!(hits.len(), 3);
}

#[test]
fn reopened_store_matches_original() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(many_topics(10, 8), EngineConfig::default(), dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    engine
        .insert_chunk(ChunkRecord { id: ChunkId(9999), source: "late".into(), text: topic_text("t2w", &mut rng) })
        .unwrap();
    engine.sync().unwrap();
    let cache = engine.config().cache;
    let mut reopened = Engine::open(dir.path(), cache).unwrap();
    assert_eq!(reopened.manifest(), engine.manifest());
    assert_eq!(reopened.source_of(ChunkId(9999)), Some("late"));
    for q in ["t2w1 t2w3", "t7w9", "t0w0 t9w9"] {
        for mode in Mode::ALL {
            let cfg = RetrievalConfig::new(mode, 2, 4);
            let (a, ta) = engine.retrieve(q, &cfg).unwrap();
            let (b, tb) = reopened.retrieve(q, &cfg).unwrap();
            assert_eq!(a, b);
            if mode != Mode::Full {
                assert_eq!(ta.total, tb.total);
            }
        }
    }
}

#[test]
fn rebuild_is_deterministic() {
    let records = many_topics(8, 7);
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    let e1 = Engine::build(records.clone(), EngineConfig::default(), d1.path()).unwrap();
    let e2 = Engine::build(records, EngineConfig::default(), d2.path()).unwrap();
    assert_eq!(e1.manifest().encode(), e2.manifest().encode());
    for id in e1.store().stored_clusters().unwrap() {
        assert_eq!(fs::read(e1.store().cluster_path(id)).unwrap(), fs::read(e2.store().cluster_path(id)).unwrap());
    }
}

#[test]
fn edge_cases() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(Engine::build(Vec::new(), EngineConfig::default(), dir.path()), Err(Error::EmptyCorpus)));

    let one = vec![ChunkRecord { id: ChunkId(7), source: "s".into(), text: "only chunk here".into() }];
    let mut engine = Engine::build(one, EngineConfig::default(), dir.path()).unwrap();
    assert_eq!(engine.index().n_clusters(), 1);
    for mode in Mode::ALL {
        let (hits, _) = engine.retrieve("chunk", &RetrievalConfig::new(mode, 5, 10)).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk_id, ChunkId(7));
    }
    assert!(engine.retrieve("x", &RetrievalConfig::new(Mode::Ivf, 0, 1)).is_err());
    assert!(engine.retrieve("x", &RetrievalConfig::new(Mode::Ivf, 1, 0)).is_err());
}

#[test]
fn corruption_surfaces_as_errors() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::build(two_topics(10, 60), config_with_k(2), dir.path()).unwrap();
    let b = cluster_of_topic(&engine, 10);
    let path = engine.store().cluster_path(b);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = engine.retrieve("zebra1", &RetrievalConfig::new(Mode::GenLoad, 1, 3)).unwrap_err();
    assert!(err.is_store_corruption(), "{err}");

    fs::remove_file(&path).unwrap();
    let err = engine.retrieve("zebra1", &RetrievalConfig::new(Mode::Full, 1, 3)).unwrap_err();
    assert!(err.is_store_corruption(), "{err}");

    let cache = engine.config().cache;
    fs::write(engine.store().manifest_path(), b"EGMF\x09junk").unwrap();
    assert!(matches!(Engine::open(dir.path(), cache), Err(Error::VersionMismatch { .. })));
    fs::write(engine.store().manifest_path(), b"garbage").unwrap();
    assert!(matches!(Engine::open(dir.path(), cache), Err(Error::Corrupt { .. })));
    fs::remove_file(engine.store().manifest_path()).unwrap();
    assert!(matches!(Engine::open(dir.path(), cache), Err(Error::Unbuilt(_))));
}
