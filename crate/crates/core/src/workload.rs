//! Corpus and query-trace files, plus a synthetic workload generator.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embedder::chunk_text;
use crate::error::{Error, Result};
use crate::storage::ChunkRecord;
use crate::types::ChunkId;

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
}

/// One line of a query-trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub qid: String,
    pub text: String,
    /// Corpus record ids judged relevant; enables recall against them
    /// instead of the exact top-k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_ids: Option<Vec<String>>,
}

fn parse_jsonl<T: DeserializeOwned>(content: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Parses a corpus from JSONL text. Blank lines are skipped; record ids must
/// be unique.
pub fn parse_corpus(content: &str) -> Result<Vec<CorpusRecord>> {
    let records: Vec<CorpusRecord> = parse_jsonl(content)?;
    check_unique(content, records.iter().map(|r| r.id.as_str()), "record id")?;
    Ok(records)
}

/// Parses a query trace from JSONL text; qids must be unique.
pub fn parse_trace(content: &str) -> Result<Vec<QueryRecord>> {
    let records: Vec<QueryRecord> = parse_jsonl(content)?;
    check_unique(content, records.iter().map(|r| r.qid.as_str()), "qid")?;
    Ok(records)
}

fn check_unique<'a>(content: &str, ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    let lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, _)| i + 1);
    for (id, line) in ids.zip(lines) {
        if !seen.insert(id) {
            return Err(Error::Parse { line, message: format!("duplicate {what} {id:?}") });
        }
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_corpus(&content)
}

pub fn read_trace(path: &Path) -> Result<Vec<QueryRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_trace(&content)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain records serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn write_trace(path: &Path, records: &[QueryRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Splits every record into chunks and numbers them consecutively from 0.
pub fn ingest(records: &[CorpusRecord], chunk_size: usize, overlap: usize) -> Result<Vec<ChunkRecord>> {
    let mut out = Vec::new();
    for r in records {
        for text in chunk_text(&r.text, chunk_size, overlap)? {
            out.push(ChunkRecord { id: ChunkId(out.len() as u64), source: r.id.clone(), text });
        }
    }
    Ok(out)
}

/// Length distribution for synthetic chunks, in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CharsDist {
    Fixed(usize),
    Uniform(usize, usize),
}

impl CharsDist {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            CharsDist::Fixed(n) => n,
            CharsDist::Uniform(lo, hi) => rng.gen_range(lo..=hi),
        }
    }
}

impl fmt::Display for CharsDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharsDist::Fixed(n) => write!(f, "fixed:{n}"),
            CharsDist::Uniform(lo, hi) => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl FromStr for CharsDist {
    type Err = Error;

    /// Accepts `N`, `fixed:N` or `uniform:LO:HI`.
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidParameter(format!("bad chars distribution {s:?}; expected fixed:N or uniform:LO:HI"));
        let num = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let dist = match parts.as_slice() {
            [n] => CharsDist::Fixed(num(n)?),
            ["fixed", n] => CharsDist::Fixed(num(n)?),
            ["uniform", lo, hi] => CharsDist::Uniform(num(lo)?, num(hi)?),
            _ => return Err(bad()),
        };
        match dist {
            CharsDist::Fixed(0) => Err(bad()),
            CharsDist::Uniform(lo, hi) if lo == 0 || lo > hi => Err(bad()),
            d => Ok(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_chunks: usize,
    pub n_topics: usize,
    pub chars: CharsDist,
    /// Topic sizes follow weight `1 / (i + 1)^skew`; 0 gives equal topics.
    pub skew: f64,
    /// Total queries divided by distinct query texts; at least 1.
    pub reuse_ratio: f64,
    pub n_queries: usize,
    pub seed: u64,
    pub vocab_per_topic: usize,
    pub query_words: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_chunks: 5000,
            n_topics: 100,
            chars: CharsDist::Fixed(512),
            skew: 1.5,
            reuse_ratio: 2.0,
            n_queries: 500,
            seed: 7,
            vocab_per_topic: 40,
            query_words: 8,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_chunks == 0 {
            return bad("synthetic corpus needs at least one chunk");
        }
        if self.n_topics == 0 || self.n_topics > self.n_chunks {
            return bad("topics must be between 1 and the number of chunks");
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return bad("skew must be finite and non-negative");
        }
        if !(self.reuse_ratio.is_finite() && self.reuse_ratio >= 1.0) {
            return bad("reuse ratio must be at least 1");
        }
        if self.vocab_per_topic == 0 || self.query_words == 0 {
            return bad("vocabulary and query length must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorkload {
    pub corpus: Vec<CorpusRecord>,
    pub trace: Vec<QueryRecord>,
    /// Topic of each corpus record, by position.
    pub topics: Vec<usize>,
}

impl SynthWorkload {
    /// Total characters per topic.
    pub fn topic_mass(&self, n_topics: usize) -> Vec<u64> {
        let mut mass = vec![0u64; n_topics];
        for (r, &t) in self.corpus.iter().zip(&self.topics) {
            mass[t] += r.text.chars().count() as u64;
        }
        mass
    }
}

/// Splits `total` into integer parts proportional to `weights`, each at
/// least 1, by largest remainder.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    let spare = (total - n) as f64;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| spare * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn random_word(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(4..=9);
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

fn text_of(
    words: &[String],
    target: usize,
    rng: &mut impl Rng,
    pick: impl Fn(&mut dyn rand::RngCore) -> usize,
) -> String {
    let mut text = String::with_capacity(target + 10);
    while text.len() < target {
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&words[pick(rng)]);
    }
    text.truncate(target);
    if text.ends_with(' ') {
        text.pop();
        text.push('x');
    }
    text
}

/// Generates a corpus with power-law topic sizes and a query trace whose
/// queries draw from the same topic distribution.
pub fn synthesize(params: &SynthParams) -> Result<SynthWorkload> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let weights: Vec<f64> = (0..params.n_topics).map(|i| ((i + 1) as f64).powf(-params.skew)).collect();
    let counts = apportion(params.n_chunks, &weights);

    let mut seen = HashSet::new();
    let vocab: Vec<Vec<String>> = (0..params.n_topics)
        .map(|_| {
            let mut words = Vec::with_capacity(params.vocab_per_topic);
            while words.len() < params.vocab_per_topic {
                let w = random_word(&mut rng);
                if seen.insert(w.clone()) {
                    words.push(w);
                }
            }
            words
        })
        .collect();

    let mut docs: Vec<(usize, String)> = Vec::with_capacity(params.n_chunks);
    for (t, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let target = params.chars.sample(&mut rng);
            let v = vocab[t].len();
            docs.push((t, text_of(&vocab[t], target, &mut rng, |r| r.gen_range(0..v))));
        }
    }
    docs.shuffle(&mut rng);
    let topics = docs.iter().map(|(t, _)| *t).collect();
    let corpus =
        docs.into_iter().enumerate().map(|(i, (_, text))| CorpusRecord { id: format!("doc-{i}"), text }).collect();

    let trace = if params.n_queries == 0 {
        Vec::new()
    } else {
        let n_unique = ((params.n_queries as f64 / params.reuse_ratio).round() as usize).clamp(1, params.n_queries);
        let total_w: f64 = weights.iter().sum();
        let mut texts = Vec::with_capacity(n_unique);
        let mut distinct = BTreeSet::new();
        while texts.len() < n_unique {
            let mut x = rng.gen::<f64>() * total_w;
            let mut topic = params.n_topics - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    topic = i;
                    break;
                }
                x -= w;
            }
            let q: Vec<&str> =
                (0..params.query_words).map(|_| vocab[topic].choose(&mut rng).expect("non-empty").as_str()).collect();
            let q = q.join(" ");
            if distinct.insert(q.clone()) {
                texts.push(q);
            }
        }
        let mut order: Vec<usize> = (0..n_unique).collect();
        order.extend((n_unique..params.n_queries).map(|_| rng.gen_range(0..n_unique)));
        order.shuffle(&mut rng);
        order
            .into_iter()
            .enumerate()
            .map(|(i, u)| QueryRecord { qid: format!("q{i}"), text: texts[u].clone(), relevant_ids: None })
            .collect()
    };

    Ok(SynthWorkload { corpus, trace, topics })
}
