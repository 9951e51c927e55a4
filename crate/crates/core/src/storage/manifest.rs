//! Index manifest: `"EGMF"` magic, one version byte, then a bincode body.

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::embedder::EmbedderSpec;
use crate::error::{Error, Result};
use crate::index::{Centroid, Cluster, IvfIndex, IvfParams};

pub const MANIFEST_MAGIC: &[u8; 4] = b"EGMF";
pub const MANIFEST_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub embedder: EmbedderSpec,
    pub cost_model: CostModel,
    pub params: IvfParams,
    pub dimension: usize,
    pub next_cluster_id: u32,
    /// Character mass above which an insert splits a cluster.
    pub split_threshold_chars: f64,
    /// Character mass below which a removal merges a cluster away.
    pub merge_threshold_chars: f64,
    pub centroids: Vec<Centroid>,
    pub clusters: Vec<Cluster>,
}

impl IndexManifest {
    pub fn from_index(
        index: &IvfIndex,
        embedder: EmbedderSpec,
        cost_model: CostModel,
        split_threshold_chars: f64,
        merge_threshold_chars: f64,
    ) -> Self {
        IndexManifest {
            embedder,
            cost_model,
            params: *index.params(),
            dimension: index.dimension(),
            next_cluster_id: index.next_cluster_id(),
            split_threshold_chars,
            merge_threshold_chars,
            centroids: index.centroids().to_vec(),
            clusters: index.clusters().cloned().collect(),
        }
    }

    pub fn to_index(&self) -> Result<IvfIndex> {
        IvfIndex::from_parts(
            self.dimension,
            self.params,
            self.centroids.clone(),
            self.clusters.clone(),
            self.next_cluster_id,
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MANIFEST_MAGIC);
        out.push(MANIFEST_VERSION);
        out.extend(bincode::serialize(self).expect("manifest is always serializable"));
        out
    }

    pub fn decode(bytes: &[u8], path: &std::path::Path) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != MANIFEST_MAGIC {
            return Err(Error::corrupt(path, "bad manifest magic"));
        }
        if bytes[4] != MANIFEST_VERSION {
            return Err(Error::VersionMismatch { found: bytes[4], expected: MANIFEST_VERSION });
        }
        let manifest: IndexManifest =
            bincode::deserialize(&bytes[5..]).map_err(|e| Error::corrupt(path, format!("manifest body: {e}")))?;
        Ok(manifest)
    }
}
