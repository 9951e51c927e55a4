use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use lazyrag::engine::{Engine, Mode, RetrievalConfig};
use lazyrag::metrics::{query_recall, replay, resident_memory_bytes, MetricsReport, QueryOutcome, ReportBuilder};
use lazyrag::storage::ClusterStore;
use lazyrag::workload::{
    ingest, read_corpus, read_trace, synthesize, write_corpus, write_trace, QueryRecord, SynthParams,
};
use lazyrag::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Settings, STORE_SETTINGS_FILE};
use crate::table;
use crate::{BuildArgs, InspectArgs, QueryArgs, SweepArgs, SynthArgs};

/// 3 for store corruption, 2 for any other failure after argument parsing.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let corrupt = err.chain().filter_map(|e| e.downcast_ref::<Error>()).any(Error::is_store_corruption);
    if corrupt {
        3
    } else {
        2
    }
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let mut settings = Settings::load_or_default(args.config.as_deref())?;
    if let Some(k) = args.clusters {
        settings.index.n_clusters = Some(k);
    }
    if let Some(slo) = args.slo {
        settings.cost.slo = Some(slo);
    }
    if let Some(seed) = args.seed {
        settings.index.seed = seed;
    }
    if let Some(d) = args.dimension {
        settings.embedder.dimension = d;
    }
    if let Some(size) = args.chunk_size {
        settings.chunking.chunk_size = size;
    }
    let config = settings.engine_config()?;

    let corpus = read_corpus(&args.corpus).with_context(|| format!("corpus {}", args.corpus.display()))?;
    let records = ingest(&corpus, settings.chunking.chunk_size, settings.chunking.overlap)?;
    let engine = Engine::build(records, config, &args.store)?;
    settings.save(&args.store.join(STORE_SETTINGS_FILE))?;

    let s = engine.build_summary();
    println!("store              {}", args.store.display());
    println!("chunks             {}", s.n_chunks);
    println!("clusters (K)       {}", s.n_clusters);
    println!("persisted clusters {}", s.persisted_clusters);
    println!("slo                {:.3} s", config.cost.slo);
    println!("embedding bytes    stored {} / pruned {}", s.stored_embedding_bytes, s.pruned_embedding_bytes);
    Ok(())
}

fn store_settings(store: &Path, explicit: Option<&Path>) -> Result<Settings> {
    match explicit {
        Some(p) => Settings::load(p),
        None => {
            let saved = store.join(STORE_SETTINGS_FILE);
            if saved.exists() {
                Settings::load(&saved)
            } else {
                Ok(Settings::default())
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct QueryReport<'a> {
    metrics: &'a MetricsReport,
    parallel_readonly: bool,
    queries: &'a [QueryOutcome],
}

pub fn query(args: &QueryArgs) -> Result<()> {
    let settings = store_settings(&args.store, args.config.as_deref())?;
    let store = ClusterStore::open(&args.store)?;
    let slo = store.read_manifest()?.cost_model.slo;
    let mut cache = settings.cache_config(slo);
    if let Some(bytes) = args.cache_bytes {
        cache.capacity_bytes = bytes;
    }
    let mut engine = Engine::open(&args.store, cache)?;
    engine.set_distance_cost(settings.cost.distance_cost)?;
    let trace = read_trace(&args.trace).with_context(|| format!("trace {}", args.trace.display()))?;
    let config = RetrievalConfig::new(args.mode, args.nprobe, args.k);

    let started = Instant::now();
    let (metrics, outcomes) = if args.parallel_readonly {
        replay_readonly(&engine, &trace, &config)?
    } else {
        replay(&mut engine, &trace, &config)?
    };
    let wall = started.elapsed();

    let report = QueryReport { metrics: &metrics, parallel_readonly: args.parallel_readonly, queries: &outcomes };
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(&args.out, json + "\n").with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", table::metrics(&metrics));
    println!("report             {}", args.out.display());
    println!("wall time          {:.3} s (host clock, not simulated)", wall.as_secs_f64());
    Ok(())
}

fn replay_readonly(
    engine: &Engine,
    trace: &[QueryRecord],
    config: &RetrievalConfig,
) -> lazyrag::Result<(MetricsReport, Vec<QueryOutcome>)> {
    let results: Vec<_> = trace
        .par_iter()
        .map(|q| {
            let (hits, t) = engine.retrieve_readonly(&q.text, config)?;
            let recall = query_recall(engine, q, &hits, config.k)?;
            Ok((q, hits, t, recall))
        })
        .collect::<lazyrag::Result<_>>()?;
    let slo = config.slo.unwrap_or(engine.config().cost.slo);
    let mut builder = ReportBuilder::new(config.mode, config.nprobe, config.k, slo);
    let mut outcomes = Vec::with_capacity(results.len());
    for (q, hits, t, recall) in results {
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

#[derive(Debug, Serialize)]
struct SweepPoint {
    nprobe: usize,
    recall: f64,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    k: usize,
    target: f64,
    chosen_nprobe: Option<usize>,
    max_recall: f64,
    curve: Vec<SweepPoint>,
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.target) {
        return Err(Error::InvalidParameter(format!("target recall {} outside [0, 1]", args.target)).into());
    }
    let settings = store_settings(&args.store, None)?;
    let store = ClusterStore::open(&args.store)?;
    let slo = store.read_manifest()?.cost_model.slo;
    let engine = Engine::open(&args.store, settings.cache_config(slo))?;
    let trace = read_trace(&args.trace).with_context(|| format!("trace {}", args.trace.display()))?;
    if trace.is_empty() {
        return Err(Error::InvalidParameter("trace has no queries".into()).into());
    }

    let n_clusters = engine.index().n_clusters();
    let mut curve = Vec::with_capacity(n_clusters);
    for nprobe in 1..=n_clusters {
        let config = RetrievalConfig::new(Mode::Ivf, nprobe, args.k);
        let recalls: Vec<f64> = trace
            .par_iter()
            .map(|q| {
                let (hits, _) = engine.retrieve_readonly(&q.text, &config)?;
                query_recall(&engine, q, &hits, args.k)
            })
            .collect::<lazyrag::Result<_>>()?;
        let recall = recalls.iter().sum::<f64>() / recalls.len() as f64;
        curve.push(SweepPoint { nprobe, recall });
    }
    let chosen = curve.iter().find(|p| p.recall >= args.target).map(|p| p.nprobe);
    let best = curve.iter().max_by(|a, b| a.recall.total_cmp(&b.recall).then(b.nprobe.cmp(&a.nprobe))).expect("K >= 1");
    let (max_recall, best_nprobe) = (best.recall, best.nprobe);

    println!("{:>8}  {:>8}", "nprobe", "recall");
    for p in &curve {
        println!("{:>8}  {:>8.4}", p.nprobe, p.recall);
    }
    if let Some(out) = &args.out {
        let report = SweepReport { k: args.k, target: args.target, chosen_nprobe: chosen, max_recall, curve };
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    match chosen {
        Some(n) => {
            println!("chosen nprobe={n} k={} (target recall {})", args.k, args.target);
            Ok(())
        }
        None => Err(anyhow!(
            "target recall {} unreachable; max achievable {:.4} at nprobe={}",
            args.target,
            max_recall,
            best_nprobe
        )),
    }
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let params = SynthParams {
        n_chunks: args.n_chunks,
        n_topics: args.n_topics,
        chars: args.chars,
        skew: args.skew,
        reuse_ratio: args.reuse_ratio,
        n_queries: args.n_queries,
        seed: args.seed,
        ..SynthParams::default()
    };
    let workload = synthesize(&params)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let corpus = args.out.join("corpus.jsonl");
    let trace = args.out.join("trace.jsonl");
    write_corpus(&corpus, &workload.corpus)?;
    write_trace(&trace, &workload.trace)?;
    let mass = workload.topic_mass(params.n_topics);
    println!("corpus  {} ({} records)", corpus.display(), workload.corpus.len());
    println!("trace   {} ({} queries)", trace.display(), workload.trace.len());
    println!("largest topic mass {} chars", mass.iter().max().copied().unwrap_or(0));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClusterSummary {
    cluster_id: u32,
    members: usize,
    total_chars: u64,
    gen_latency: f64,
    persisted: bool,
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let store = ClusterStore::open(&args.store)?;
    let manifest = store.read_manifest()?;
    let out = if args.full {
        serde_json::to_value(&manifest)?
    } else {
        let clusters: Vec<ClusterSummary> = manifest
            .clusters
            .iter()
            .map(|c| ClusterSummary {
                cluster_id: c.cluster_id.0,
                members: c.members.len(),
                total_chars: c.total_chars,
                gen_latency: c.gen_latency,
                persisted: c.persisted,
            })
            .collect();
        serde_json::json!({
            "dimension": manifest.dimension,
            "embedder": manifest.embedder,
            "cost_model": manifest.cost_model,
            "params": manifest.params,
            "n_clusters": manifest.clusters.len(),
            "n_chunks": manifest.clusters.iter().map(|c| c.members.len()).sum::<usize>(),
            "persisted_clusters": manifest.clusters.iter().filter(|c| c.persisted).count(),
            "next_cluster_id": manifest.next_cluster_id,
            "split_threshold_chars": manifest.split_threshold_chars,
            "merge_threshold_chars": manifest.merge_threshold_chars,
            "clusters": clusters,
        })
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
