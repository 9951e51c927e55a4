use std::fmt::Write;

use lazyrag::metrics::MetricsReport;

/// Human-readable summary of a report, one metric per line.
pub fn metrics(r: &MetricsReport) -> String {
    let mut rows: Vec<(&str, String)> = vec![
        ("mode", r.mode.to_string()),
        ("nprobe / k", format!("{} / {}", r.nprobe, r.k)),
        ("queries", r.n_queries.to_string()),
        ("recall@k", r.recall_at_k.map_or("-".into(), |v| format!("{v:.4}"))),
        ("mean latency", format!("{:.4} s", r.mean_latency)),
        ("p50 / p95 / p99", format!("{:.4} / {:.4} / {:.4} s", r.p50_latency, r.p95_latency, r.p99_latency)),
        ("max latency", format!("{:.4} s", r.max_latency)),
        ("max cluster cost", format!("{:.4} s", r.max_cluster_cost)),
        ("slo violations", format!("{} (slo {:.3} s)", r.slo_violations, r.slo)),
        ("generation time", format!("{:.3} s", r.total_generation_seconds)),
        ("load time", format!("{:.3} s", r.total_load_seconds)),
        ("cluster accesses", format!("{} total / {} unique", r.total_cluster_accesses, r.unique_cluster_accesses)),
        ("reuse ratio", format!("{:.3}", r.reuse_ratio)),
        ("resident memory", format!("{} bytes", r.resident_memory_bytes)),
    ];
    if r.mode == lazyrag::engine::Mode::Full {
        rows.push((
            "cache hit rate",
            format!("{:.4} ({} hits / {} misses)", r.cache_hit_rate, r.cache_hits, r.cache_misses),
        ));
        if let Some(c) = &r.cache {
            rows.push(("cache evictions", format!("{} (+{} below threshold)", c.evictions, c.threshold_evictions)));
            rows.push(("admissions rejected", c.admissions_rejected.to_string()));
            rows.push(("threshold", format!("{:.4} s", c.threshold)));
        }
    }
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<19}{v}");
    }
    out
}
