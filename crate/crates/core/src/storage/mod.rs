//! Selective index storage: clusters whose regeneration would exceed the
//! latency objective keep their embeddings on disk; everything else is pruned.
//!
//! Layout under a store directory:
//!
//! ```text
//! manifest.egm              written last; its absence means "unbuilt"
//! clusters/<cluster_id>.egv one file per persisted cluster
//! chunks.jsonl              chunk texts used for regeneration
//! ```

mod cluster_file;
mod manifest;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cluster_file::{decode_cluster, encode_cluster, CLUSTER_MAGIC};
pub use manifest::{IndexManifest, MANIFEST_MAGIC, MANIFEST_VERSION};

use crate::clock::SimClock;
use crate::cost::CostModel;
use crate::embedder::{estimate_load_latency, Embedder};
use crate::error::{Error, Result};
use crate::index::IvfIndex;
use crate::types::{ChunkId, ChunkTable, ClusterId, DataChunk, Embedding};

pub const MANIFEST_FILE: &str = "manifest.egm";
pub const CLUSTER_DIR: &str = "clusters";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDecision {
    pub cluster_id: ClusterId,
    pub gen_latency: f64,
    pub persisted: bool,
}

/// One line of `chunks.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub id: ChunkId,
    /// Identifier of the corpus record the chunk came from.
    pub source: String,
    pub text: String,
}

/// Handle on a store directory.
#[derive(Debug, Clone)]
pub struct ClusterStore {
    root: PathBuf,
}

impl ClusterStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let clusters = root.join(CLUSTER_DIR);
        fs::create_dir_all(&clusters).map_err(|e| Error::io(format!("creating {}", clusters.display()), e))?;
        Ok(ClusterStore { root })
    }

    /// Opens an existing store; fails with [`Error::Unbuilt`] when no manifest exists.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let store = ClusterStore { root: root.into() };
        if !store.manifest_path().is_file() {
            return Err(Error::Unbuilt(store.root));
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn cluster_path(&self, id: ClusterId) -> PathBuf {
        self.root.join(CLUSTER_DIR).join(format!("{}.egv", id.0))
    }

    pub fn has_cluster(&self, id: ClusterId) -> bool {
        self.cluster_path(id).is_file()
    }

    pub fn write_cluster(&self, id: ClusterId, dimension: usize, entries: &[(ChunkId, Embedding)]) -> Result<()> {
        let bytes = encode_cluster(dimension, entries);
        write_atomic(&self.cluster_path(id), &bytes).map_err(|source| Error::StoreWrite { cluster: id, source })
    }

    /// Reads a cluster's embeddings without charging any clock.
    pub fn read_cluster(&self, id: ClusterId, dimension: usize) -> Result<Vec<(ChunkId, Embedding)>> {
        let path = self.cluster_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotPersisted(id)),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        let (dim, entries) = decode_cluster(&bytes, &path)?;
        if dim != dimension {
            return Err(Error::corrupt(&path, format!("dimension {dim}, index expects {dimension}")));
        }
        Ok(entries)
    }

    /// Loads a persisted cluster and charges the simulated load latency.
    pub fn load_persisted(
        &self,
        id: ClusterId,
        dimension: usize,
        cost: &CostModel,
        clock: &mut SimClock,
    ) -> Result<(Vec<(ChunkId, Embedding)>, f64)> {
        let entries = self.read_cluster(id, dimension)?;
        let charge = estimate_load_latency(entries.len(), cost);
        clock.charge(charge)?;
        Ok((entries, charge))
    }

    pub fn remove_cluster(&self, id: ClusterId) -> Result<()> {
        let path = self.cluster_path(id);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::io(format!("removing {}", path.display()), e)),
        }
    }

    /// Cluster ids that currently have a file on disk.
    pub fn stored_clusters(&self) -> Result<Vec<ClusterId>> {
        let dir = self.root.join(CLUSTER_DIR);
        let mut ids = Vec::new();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".egv") {
                if let Ok(id) = stem.parse() {
                    ids.push(ClusterId(id));
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn write_manifest(&self, manifest: &IndexManifest) -> Result<()> {
        let path = self.manifest_path();
        write_atomic(&path, &manifest.encode()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_manifest(&self) -> Result<IndexManifest> {
        let path = self.manifest_path();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::Unbuilt(self.root.clone())),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        IndexManifest::decode(&bytes, &path)
    }

    pub fn write_chunks<'a>(&self, records: impl IntoIterator<Item = &'a ChunkRecord>) -> Result<()> {
        let path = self.root.join(CHUNKS_FILE);
        let tmp = path.with_extension("jsonl.tmp");
        let ctx = |e| Error::io(format!("writing {}", path.display()), e);
        let file = fs::File::create(&tmp).map_err(ctx)?;
        let mut w = BufWriter::new(file);
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| ctx(e.into()))?;
            w.write_all(b"\n").map_err(ctx)?;
        }
        w.flush().map_err(ctx)?;
        drop(w);
        fs::rename(&tmp, &path).map_err(ctx)
    }

    pub fn read_chunks(&self) -> Result<Vec<ChunkRecord>> {
        let path = self.root.join(CHUNKS_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::corrupt(&path, format!("cannot open: {e}")))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ChunkRecord =
                serde_json::from_str(&line).map_err(|e| Error::corrupt(&path, format!("line {}: {e}", i + 1)))?;
            out.push(rec);
        }
        Ok(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Brings one cluster's on-disk state in line with its current generation
/// latency: persisted iff `gen_latency > slo`. A persisted cluster is always
/// rewritten, since its membership may have changed.
pub fn reconcile_cluster(
    index: &mut IvfIndex,
    id: ClusterId,
    chunks: &ChunkTable,
    embedder: &dyn Embedder,
    cost: &CostModel,
    store: &ClusterStore,
) -> Result<PersistenceDecision> {
    let cluster = index.cluster(id).ok_or(Error::UnknownCluster(id))?;
    let gen_latency = cluster.gen_latency;
    let persist = gen_latency > cost.slo;
    if persist {
        let entries: Vec<(ChunkId, Embedding)> = cluster
            .members
            .iter()
            .map(|m| {
                let chunk = chunks.get(m).ok_or(Error::UnknownChunk(*m))?;
                Ok((*m, embedder.embed(&chunk.text)))
            })
            .collect::<Result<_>>()?;
        store.write_cluster(id, index.dimension(), &entries)?;
    } else {
        store.remove_cluster(id)?;
    }
    index.set_persisted(id, persist);
    Ok(PersistenceDecision { cluster_id: id, gen_latency, persisted: persist })
}

/// Profiles every cluster and persists exactly those whose generation
/// latency exceeds the SLO. Does not write the manifest.
pub fn profile_and_persist(
    index: &mut IvfIndex,
    chunks: &ChunkTable,
    embedder: &dyn Embedder,
    cost: &CostModel,
    store: &ClusterStore,
) -> Result<Vec<PersistenceDecision>> {
    let ids: Vec<ClusterId> = index.clusters().map(|c| c.cluster_id).collect();
    ids.into_iter().map(|id| reconcile_cluster(index, id, chunks, embedder, cost, store)).collect()
}

/// Checks persisted ⇔ gen_latency > slo for every cluster, that the file set
/// matches the persisted flags, and that no stray cluster files remain.
pub fn audit_persistence(index: &IvfIndex, cost: &CostModel, store: &ClusterStore) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    for c in index.clusters() {
        let should = c.gen_latency > cost.slo;
        if c.persisted != should {
            problems.push(format!(
                "cluster {} flag persisted={} but gen_latency {} vs slo {}",
                c.cluster_id, c.persisted, c.gen_latency, cost.slo
            ));
        }
        if store.has_cluster(c.cluster_id) != should {
            problems.push(format!("cluster {} file presence disagrees with gen_latency", c.cluster_id));
        }
    }
    for id in store.stored_clusters()? {
        if index.cluster(id).is_none() {
            problems.push(format!("stray file for removed cluster {id}"));
        }
    }
    Ok(problems)
}

pub fn chunk_table(chunks: impl IntoIterator<Item = DataChunk>) -> ChunkTable {
    chunks.into_iter().map(|c| (c.id, c)).collect()
}
