use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::embedder::{gen_latency_for_chars, Embedder};
use crate::error::{Error, Result};
use crate::index::kmeans::{kmeans, mean_of};
use crate::types::{l2_squared, ChunkId, ClusterId, DataChunk, Embedding};

pub const DEFAULT_KMEANS_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfParams {
    /// Number of clusters; `None` picks ceil(sqrt(N)).
    pub n_clusters: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for IvfParams {
    fn default() -> Self {
        IvfParams { n_clusters: None, kmeans_iters: DEFAULT_KMEANS_ITERS, seed: 0x1f }
    }
}

pub fn default_n_clusters(n_chunks: usize) -> usize {
    (n_chunks as f64).sqrt().ceil() as usize
}

/// First-level entry: always memory resident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub cluster_id: ClusterId,
    pub vector: Embedding,
}

/// Second-level entry: chunk references plus profiled generation latency.
/// Embeddings are not kept here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: ClusterId,
    pub members: Vec<ChunkId>,
    pub total_chars: u64,
    pub gen_latency: f64,
    pub persisted: bool,
}

impl Cluster {
    fn empty(cluster_id: ClusterId) -> Self {
        Cluster { cluster_id, members: Vec::new(), total_chars: 0, gen_latency: 0.0, persisted: false }
    }

    fn reprofile(&mut self, cost: &CostModel) {
        self.gen_latency = gen_latency_for_chars(self.total_chars, cost);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dimension: usize,
    params: IvfParams,
    centroids: Vec<Centroid>,
    clusters: BTreeMap<ClusterId, Cluster>,
    owner: BTreeMap<ChunkId, ClusterId>,
    next_cluster_id: u32,
}

impl IvfIndex {
    /// Embeds every chunk, clusters the embeddings, records membership and
    /// generation latency per cluster, then drops the embeddings.
    pub fn build(chunks: &[DataChunk], embedder: &dyn Embedder, params: IvfParams, cost: &CostModel) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let embeddings: Vec<Embedding> = chunks.iter().map(|c| embedder.embed(&c.text)).collect();
        let k = params.n_clusters.unwrap_or_else(|| default_n_clusters(chunks.len()));
        let km = kmeans(&embeddings, k, params.kmeans_iters, params.seed)?;

        let dimension = embedder.dimension();
        let mut clusters: BTreeMap<ClusterId, Cluster> =
            (0..k as u32).map(|i| (ClusterId(i), Cluster::empty(ClusterId(i)))).collect();
        let mut sums = vec![vec![0.0f64; dimension]; k];
        let mut owner = BTreeMap::new();
        for ((chunk, emb), &c) in chunks.iter().zip(&embeddings).zip(&km.assignment) {
            let id = ClusterId(c as u32);
            if owner.insert(chunk.id, id).is_some() {
                return Err(Error::DuplicateChunk(chunk.id));
            }
            let cluster = clusters.get_mut(&id).expect("assignment within k");
            cluster.members.push(chunk.id);
            cluster.total_chars += chunk.char_len as u64;
            for (s, v) in sums[c].iter_mut().zip(emb.as_slice()) {
                *s += *v as f64;
            }
        }
        let centroids = km
            .centroids
            .into_iter()
            .enumerate()
            .map(|(c, trained)| {
                let count = clusters[&ClusterId(c as u32)].members.len();
                let vector = if count > 0 { mean_of(&sums[c], count) } else { trained };
                Centroid { cluster_id: ClusterId(c as u32), vector }
            })
            .collect();
        for cluster in clusters.values_mut() {
            cluster.reprofile(cost);
        }
        Ok(IvfIndex { dimension, params, centroids, clusters, owner, next_cluster_id: k as u32 })
    }

    /// Reassembles an index from stored parts, checking the partition.
    pub fn from_parts(
        dimension: usize,
        params: IvfParams,
        centroids: Vec<Centroid>,
        clusters: Vec<Cluster>,
        next_cluster_id: u32,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut owner = BTreeMap::new();
        for cluster in clusters {
            for &m in &cluster.members {
                if owner.insert(m, cluster.cluster_id).is_some() {
                    return Err(Error::DuplicateChunk(m));
                }
            }
            map.insert(cluster.cluster_id, cluster);
        }
        if centroids.len() != map.len() || centroids.iter().any(|c| !map.contains_key(&c.cluster_id)) {
            return Err(Error::InvalidParameter("centroids and clusters disagree".into()));
        }
        if let Some(c) = centroids.iter().find(|c| c.vector.dim() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, actual: c.vector.dim() });
        }
        let mut centroids = centroids;
        centroids.sort_by_key(|c| c.cluster_id);
        Ok(IvfIndex { dimension, params, centroids, clusters: map, owner, next_cluster_id })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn params(&self) -> &IvfParams {
        &self.params
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn n_chunks(&self) -> usize {
        self.owner.len()
    }

    pub fn next_cluster_id(&self) -> u32 {
        self.next_cluster_id
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn centroid(&self, id: ClusterId) -> Option<&Centroid> {
        self.centroids.binary_search_by_key(&id, |c| c.cluster_id).ok().map(|i| &self.centroids[i])
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn cluster_of(&self, chunk: ChunkId) -> Option<ClusterId> {
        self.owner.get(&chunk).copied()
    }

    pub fn contains_chunk(&self, chunk: ChunkId) -> bool {
        self.owner.contains_key(&chunk)
    }

    pub(crate) fn set_persisted(&mut self, id: ClusterId, persisted: bool) {
        if let Some(c) = self.clusters.get_mut(&id) {
            c.persisted = persisted;
        }
    }

    /// Ids of the `nprobe` nearest centroids, by distance then id.
    pub fn search_centroids(&self, query: &Embedding, nprobe: usize) -> Result<Vec<ClusterId>> {
        if nprobe == 0 || nprobe > self.centroids.len() {
            return Err(Error::NprobeOutOfRange { nprobe, clusters: self.centroids.len() });
        }
        if query.dim() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, actual: query.dim() });
        }
        let mut scored: Vec<(f32, ClusterId)> =
            self.centroids.iter().map(|c| (l2_squared(c.vector.as_slice(), query.as_slice()), c.cluster_id)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(nprobe).map(|(_, id)| id).collect())
    }

    /// Nearest cluster to `vector` other than `exclude`.
    pub fn nearest_other(&self, vector: &Embedding, exclude: ClusterId) -> Option<ClusterId> {
        self.centroids
            .iter()
            .filter(|c| c.cluster_id != exclude)
            .map(|c| (l2_squared(c.vector.as_slice(), vector.as_slice()), c.cluster_id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// True when cluster members exactly partition `expected`.
    pub fn is_partition_of(&self, expected: impl IntoIterator<Item = ChunkId>) -> bool {
        let mut seen = BTreeMap::new();
        for c in self.clusters.values() {
            for &m in &c.members {
                if seen.insert(m, c.cluster_id).is_some() {
                    return false;
                }
            }
        }
        let expected: Vec<ChunkId> = expected.into_iter().collect();
        seen.len() == expected.len() && expected.iter().all(|id| seen.contains_key(id)) && seen == self.owner
    }

    pub(crate) fn add_member(&mut self, id: ClusterId, chunk: &DataChunk, cost: &CostModel) -> Result<()> {
        if self.owner.contains_key(&chunk.id) {
            return Err(Error::DuplicateChunk(chunk.id));
        }
        let cluster = self.clusters.get_mut(&id).ok_or(Error::UnknownCluster(id))?;
        cluster.members.push(chunk.id);
        cluster.total_chars += chunk.char_len as u64;
        cluster.reprofile(cost);
        self.owner.insert(chunk.id, id);
        Ok(())
    }

    pub(crate) fn remove_member(&mut self, chunk: &DataChunk, cost: &CostModel) -> Result<ClusterId> {
        let id = self.owner.remove(&chunk.id).ok_or(Error::UnknownChunk(chunk.id))?;
        let cluster = self.clusters.get_mut(&id).expect("owner map tracks clusters");
        cluster.members.retain(|m| *m != chunk.id);
        cluster.total_chars -= chunk.char_len as u64;
        cluster.reprofile(cost);
        Ok(id)
    }

    /// Replaces cluster `old` with one new cluster per `(centroid, members)` part.
    pub(crate) fn split(
        &mut self,
        old: ClusterId,
        parts: Vec<(Embedding, Vec<&DataChunk>)>,
        cost: &CostModel,
    ) -> Result<Vec<ClusterId>> {
        let removed = self.clusters.remove(&old).ok_or(Error::UnknownCluster(old))?;
        self.centroids.retain(|c| c.cluster_id != old);
        debug_assert_eq!(removed.members.len(), parts.iter().map(|(_, m)| m.len()).sum::<usize>());
        let mut ids = Vec::with_capacity(parts.len());
        for (vector, members) in parts {
            let id = ClusterId(self.next_cluster_id);
            self.next_cluster_id += 1;
            let mut cluster = Cluster::empty(id);
            for chunk in members {
                cluster.members.push(chunk.id);
                cluster.total_chars += chunk.char_len as u64;
                self.owner.insert(chunk.id, id);
            }
            cluster.reprofile(cost);
            self.clusters.insert(id, cluster);
            self.centroids.push(Centroid { cluster_id: id, vector });
            ids.push(id);
        }
        self.centroids.sort_by_key(|c| c.cluster_id);
        Ok(ids)
    }

    /// Folds cluster `from` into `into`; the surviving centroid becomes the
    /// member-count weighted mean of both.
    pub(crate) fn merge(&mut self, from: ClusterId, into: ClusterId, cost: &CostModel) -> Result<()> {
        if from == into {
            return Err(Error::InvalidParameter("cannot merge a cluster into itself".into()));
        }
        let src = self.clusters.remove(&from).ok_or(Error::UnknownCluster(from))?;
        let Some(dst) = self.clusters.get_mut(&into) else {
            self.clusters.insert(from, src);
            return Err(Error::UnknownCluster(into));
        };
        let (n_src, n_dst) = (src.members.len(), dst.members.len());
        let src_vec = self.centroids.iter().find(|c| c.cluster_id == from).map(|c| c.vector.clone());
        let dst_pos = self.centroids.iter().position(|c| c.cluster_id == into).expect("centroid per cluster");
        if let Some(src_vec) = src_vec {
            if n_src + n_dst > 0 {
                let dst_vec = &self.centroids[dst_pos].vector;
                let sum: Vec<f64> = src_vec
                    .as_slice()
                    .iter()
                    .zip(dst_vec.as_slice())
                    .map(|(a, b)| *a as f64 * n_src as f64 + *b as f64 * n_dst as f64)
                    .collect();
                self.centroids[dst_pos].vector = mean_of(&sum, n_src + n_dst);
            }
        }
        for &m in &src.members {
            self.owner.insert(m, into);
        }
        dst.members.extend(src.members);
        dst.total_chars += src.total_chars;
        dst.reprofile(cost);
        self.centroids.retain(|c| c.cluster_id != from);
        Ok(())
    }
}
