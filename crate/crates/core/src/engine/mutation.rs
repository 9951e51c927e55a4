//! Incremental insertion and removal of chunks.
//!
//! Both keep the cluster partition intact and re-run the persistence rule on
//! every touched cluster. Oversized clusters are split with 2-means; clusters
//! that shrink below the merge threshold fold into their nearest neighbour.
//! Changes reach the manifest on the next [`Engine::sync`].

use crate::embedder::{gen_latency_for_chars, Embedder};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::index::kmeans;
use crate::storage::{reconcile_cluster, ChunkRecord};
use crate::types::{ChunkId, ClusterId, DataChunk, Embedding};

impl Engine {
    /// Adds a chunk to the cluster with the nearest centroid. Returns the
    /// cluster that holds it afterwards.
    pub fn insert_chunk(&mut self, record: ChunkRecord) -> Result<ClusterId> {
        if self.chunks.contains_key(&record.id) {
            return Err(Error::DuplicateChunk(record.id));
        }
        let chunk = DataChunk::new(record.id, record.text);
        let embedding = self.embedder.embed(&chunk.text);
        self.clock.charge(gen_latency_for_chars(chunk.char_len as u64, &self.config.cost))?;

        let target = self.index.search_centroids(&embedding, 1)?[0];
        self.index.add_member(target, &chunk, &self.config.cost)?;
        if let Some(m) = self.materialized.get_mut() {
            m.insert(chunk.id, embedding);
        }
        self.flat.take();
        self.sources.insert(chunk.id, record.source);
        let id = chunk.id;
        self.chunks.insert(id, chunk);
        self.cache.invalidate(target);

        let mass = self.index.cluster(target).expect("target exists").total_chars as f64;
        if mass > self.split_threshold_chars {
            if let Some(parts) = self.split_cluster(target)? {
                return Ok(parts.into_iter().find(|p| self.index.cluster(*p).unwrap().members.contains(&id)).unwrap());
            }
        }
        self.reconcile(target)?;
        Ok(target)
    }

    /// Removes a chunk; may delete its cluster's stored embeddings or merge
    /// the cluster into its nearest neighbour.
    pub fn remove_chunk(&mut self, id: ChunkId) -> Result<()> {
        let chunk = self.chunks.get(&id).ok_or(Error::UnknownChunk(id))?.clone();
        let cluster = self.index.remove_member(&chunk, &self.config.cost)?;
        self.chunks.remove(&id);
        self.sources.remove(&id);
        if let Some(m) = self.materialized.get_mut() {
            m.remove(&id);
        }
        self.flat.take();
        self.cache.invalidate(cluster);

        let mass = self.index.cluster(cluster).expect("owner exists").total_chars as f64;
        if mass < self.merge_threshold_chars && self.index.n_clusters() > 1 {
            let centroid = self.index.centroid(cluster).expect("centroid per cluster").vector.clone();
            let neighbour = self.index.nearest_other(&centroid, cluster).expect("more than one cluster");
            self.index.merge(cluster, neighbour, &self.config.cost)?;
            self.store.remove_cluster(cluster)?;
            self.cache.invalidate(neighbour);
            self.reconcile(neighbour)?;
        } else {
            self.reconcile(cluster)?;
        }
        Ok(())
    }

    fn reconcile(&mut self, id: ClusterId) -> Result<()> {
        reconcile_cluster(&mut self.index, id, &self.chunks, &self.embedder, &self.config.cost, &self.store)?;
        Ok(())
    }

    /// Splits `id` in two by 2-means over its members. Returns `None` when the
    /// members cannot be separated (all embeddings identical).
    fn split_cluster(&mut self, id: ClusterId) -> Result<Option<Vec<ClusterId>>> {
        let members = self.index.cluster(id).ok_or(Error::UnknownCluster(id))?.members.clone();
        if members.len() < 2 {
            return Ok(None);
        }
        let embeddings: Vec<Embedding> = members.iter().map(|m| self.embedder.embed(&self.chunks[m].text)).collect();
        let params = self.index.params();
        let km = kmeans(&embeddings, 2, params.kmeans_iters, params.seed ^ id.0 as u64)?;
        let dim = self.index.dimension();
        let mut groups: [(Vec<f64>, Vec<&DataChunk>); 2] = [(vec![0.0; dim], Vec::new()), (vec![0.0; dim], Vec::new())];
        for ((m, e), &g) in members.iter().zip(&embeddings).zip(&km.assignment) {
            groups[g].1.push(&self.chunks[m]);
            for (s, v) in groups[g].0.iter_mut().zip(e.as_slice()) {
                *s += *v as f64;
            }
        }
        if groups.iter().any(|(_, g)| g.is_empty()) {
            return Ok(None);
        }
        let parts =
            groups.into_iter().map(|(sum, chunks)| (crate::index::mean_of(&sum, chunks.len()), chunks)).collect();
        let new_ids = self.index.split(id, parts, &self.config.cost)?;
        self.store.remove_cluster(id)?;
        self.cache.invalidate(id);
        for &n in &new_ids {
            self.reconcile(n)?;
        }
        Ok(Some(new_ids))
    }
}
