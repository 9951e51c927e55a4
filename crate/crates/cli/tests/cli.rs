use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lazyrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lazyrag")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes a small workload and builds a store from it.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let ws = Workspace { dir: TempDir::new().unwrap() };
        let out = lazyrag(&[
            "synth",
            "--out",
            s(&ws.path("data")),
            "--n-chunks",
            "1000",
            "--n-topics",
            "30",
            "--n-queries",
            "80",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let out = lazyrag(&["build", "--corpus", s(&ws.corpus()), "--store", s(&ws.store())]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn corpus(&self) -> PathBuf {
        self.path("data/corpus.jsonl")
    }

    fn trace(&self) -> PathBuf {
        self.path("data/trace.jsonl")
    }

    fn store(&self) -> PathBuf {
        self.path("store")
    }

    fn inspect(&self) -> Value {
        let out = lazyrag(&["inspect", "--store", s(&self.store())]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        serde_json::from_slice(&out.stdout).unwrap()
    }

    fn query(&self, mode: &str, nprobe: usize, extra: &[&str]) -> Value {
        self.query_trace(&self.trace(), mode, nprobe, extra)
    }

    fn query_trace(&self, trace: &Path, mode: &str, nprobe: usize, extra: &[&str]) -> Value {
        let report = self.path(&format!("{mode}-{nprobe}-{}.json", extra.len()));
        let store = self.store();
        let np = nprobe.to_string();
        let mut args = vec![
            "query",
            "--store",
            s(&store),
            "--trace",
            s(trace),
            "--mode",
            mode,
            "--nprobe",
            &np,
            "--k",
            "5",
            "--out",
            s(&report),
        ];
        args.extend(extra);
        let out = lazyrag(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap()
    }
}

fn hit_lists(report: &Value) -> Vec<Value> {
    report["queries"].as_array().unwrap().iter().map(|q| q["hits"].clone()).collect()
}

#[test]
fn build_persists_exactly_the_over_slo_clusters() {
    let ws = Workspace::new();
    let m = ws.inspect();
    let slo = m["cost_model"]["slo"].as_f64().unwrap();
    let clusters = m["clusters"].as_array().unwrap();
    let recount = clusters.iter().filter(|c| c["gen_latency"].as_f64().unwrap() > slo).count();
    assert_eq!(m["persisted_clusters"].as_u64().unwrap() as usize, recount);
    assert!(recount > 0);
    assert_eq!(m["n_chunks"], 1000);
    assert!(ws.store().join("settings.toml").exists());
}

#[test]
fn rebuild_gives_identical_manifest_bytes() {
    let ws = Workspace::new();
    let first = fs::read(ws.store().join("manifest.egm")).unwrap();
    let out = lazyrag(&["build", "--corpus", s(&ws.corpus()), "--store", s(&ws.path("again"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(ws.path("again/manifest.egm")).unwrap(), first);
}

#[test]
fn malformed_corpus_line_is_named() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    let mut lines: Vec<String> = (0..6).map(|i| format!("{{\"id\":\"d{i}\",\"text\":\"some words {i}\"}}")).collect();
    lines.push("{\"id\": \"d6\", \"text\": ".into());
    fs::write(&corpus, lines.join("\n")).unwrap();
    let out = lazyrag(&["build", "--corpus", s(&corpus), "--store", s(&dir.path().join("store"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 7"), "{}", stderr(&out));
}

#[test]
fn flat_matches_full_probe_ivf_and_full_matches_ivf() {
    let ws = Workspace::new();
    let k_all = ws.inspect()["n_clusters"].as_u64().unwrap() as usize;
    let flat = ws.query("flat", 1, &[]);
    let ivf_all = ws.query("ivf", k_all, &[]);
    assert_eq!(hit_lists(&flat), hit_lists(&ivf_all));
    assert_eq!(flat["metrics"]["recall_at_k"], 1.0);

    let ivf = ws.query("ivf", 3, &[]);
    let full = ws.query("full", 3, &[]);
    assert_eq!(hit_lists(&ivf), hit_lists(&full));
    assert_ne!(ivf["metrics"]["latencies"], full["metrics"]["latencies"]);
}

#[test]
fn repeated_trace_with_large_cache_hits_half() {
    let ws = Workspace::new();
    let text = fs::read_to_string(ws.trace()).unwrap();
    let mut doubled = String::new();
    for (i, line) in text.lines().enumerate() {
        let mut q: Value = serde_json::from_str(line).unwrap();
        for copy in 0..2 {
            q["qid"] = Value::from(format!("q{i}-{copy}"));
            doubled.push_str(&q.to_string());
            doubled.push('\n');
        }
    }
    let trace = ws.path("doubled.jsonl");
    fs::write(&trace, doubled).unwrap();
    let r = ws.query_trace(&trace, "full", 4, &["--cache-bytes", "1000000000"]);
    let rate = r["metrics"]["cache_hit_rate"].as_f64().unwrap();
    assert!(rate >= 0.5, "hit rate {rate}");
}

#[test]
fn mode_latency_ordering() {
    let ws = Workspace::new();
    let mean = |mode| ws.query(mode, 4, &[])["metrics"]["mean_latency"].as_f64().unwrap();
    let (full, gen_load, gen_only) = (mean("full"), mean("gen-load"), mean("gen-only"));
    assert!(full <= gen_load && gen_load <= gen_only, "{full} {gen_load} {gen_only}");
}

#[test]
fn reports_are_reproducible_and_parallel_replay_agrees() {
    let ws = Workspace::new();
    let a = ws.path("a.json");
    let b = ws.path("b.json");
    for out in [&a, &b] {
        let o = lazyrag(&["query", "--store", s(&ws.store()), "--trace", s(&ws.trace()), "--out", s(out)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let seq = ws.query("gen-load", 2, &[]);
    let par = ws.query("gen-load", 2, &["--parallel-readonly"]);
    assert_eq!(hit_lists(&seq), hit_lists(&par));
    assert_eq!(seq["metrics"]["latencies"], par["metrics"]["latencies"]);
}

#[test]
fn sweep_curve() {
    let ws = Workspace::new();
    let k_all = ws.inspect()["n_clusters"].as_u64().unwrap();
    let run = |target: &str| {
        let out_path = ws.path(&format!("sweep-{target}.json"));
        let out = lazyrag(&[
            "sweep",
            "--store",
            s(&ws.store()),
            "--trace",
            s(&ws.trace()),
            "--target",
            target,
            "--out",
            s(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let v: Value = serde_json::from_str(&fs::read_to_string(out_path).unwrap()).unwrap();
        v
    };
    let full = run("1.0");
    let chosen = full["chosen_nprobe"].as_u64().unwrap();
    assert!(chosen <= k_all);
    let curve: Vec<f64> = full["curve"].as_array().unwrap().iter().map(|p| p["recall"].as_f64().unwrap()).collect();
    assert_eq!(curve.len() as u64, k_all);
    assert!(curve.windows(2).all(|w| w[1] >= w[0]), "{curve:?}");
    assert_eq!(*curve.last().unwrap(), 1.0);

    let relaxed = run("0.95");
    assert!(relaxed["chosen_nprobe"].as_u64().unwrap() < k_all);
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(code(&lazyrag(&["--help"])), 0);
    assert_eq!(code(&lazyrag(&["frobnicate"])), 1);

    let out = lazyrag(&["query", "--store", s(&ws.store()), "--trace", s(&ws.trace()), "--mode", "bogus"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gen-only") && stderr(&out).contains("full"), "{}", stderr(&out));

    let cfg = ws.path("bad.toml");
    fs::write(&cfg, "[cost]\ngen_rat = 3\n").unwrap();
    let out = lazyrag(&["build", "--corpus", s(&ws.corpus()), "--store", s(&ws.path("s2")), "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);

    let missing = lazyrag(&["inspect", "--store", s(&ws.path("nowhere"))]);
    assert_eq!(code(&missing), 3);

    let persisted: Vec<u64> = ws.inspect()["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["persisted"] == true)
        .map(|c| c["cluster_id"].as_u64().unwrap())
        .collect();
    for id in persisted {
        fs::write(ws.store().join(format!("clusters/{id}.egv")), b"EGV1").unwrap();
    }
    let out = lazyrag(&[
        "query",
        "--store",
        s(&ws.store()),
        "--trace",
        s(&ws.trace()),
        "--mode",
        "gen-load",
        "--out",
        s(&ws.path("x.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    fs::write(ws.store().join("manifest.egm"), b"not a manifest").unwrap();
    assert_eq!(code(&lazyrag(&["inspect", "--store", s(&ws.store())])), 3);
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let out = lazyrag(&["synth", "--out", s(&dir.path().join(name)), "--n-chunks", "200", "--n-topics", "10"]);
        assert_eq!(code(&out), 0);
    }
    for file in ["corpus.jsonl", "trace.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap()
        );
    }
    let bad = lazyrag(&["synth", "--out", s(&dir.path().join("c")), "--chars", "uniform:9:3"]);
    assert_eq!(code(&bad), 1);
}
