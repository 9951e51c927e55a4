use std::path::PathBuf;

use crate::types::{ChunkId, ClusterId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding contains a non-finite component at position {0}")]
    NonFinite(usize),

    #[error("negative cost charged to clock: {0}")]
    NegativeCost(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot index empty corpus")]
    EmptyCorpus,

    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },

    #[error("nprobe {nprobe} out of range 1..={clusters}")]
    NprobeOutOfRange { nprobe: usize, clusters: usize },

    #[error("chunk {0} is already indexed")]
    DuplicateChunk(ChunkId),

    #[error("chunk {0} is not indexed")]
    UnknownChunk(ChunkId),

    #[error("cluster {0} does not exist")]
    UnknownCluster(ClusterId),

    #[error("cluster {0} has no persisted embeddings")]
    NotPersisted(ClusterId),

    #[error("corrupt store file {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("store {} has no manifest; treating it as unbuilt", .0.display())]
    Unbuilt(PathBuf),

    #[error("unsupported manifest version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("failed to write embeddings of cluster {cluster}: {source}")]
    StoreWrite {
        cluster: ClusterId,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt { path: path.into(), reason: reason.into() }
    }

    /// True for errors that mean on-disk state cannot be trusted.
    pub fn is_store_corruption(&self) -> bool {
        matches!(self, Error::Corrupt { .. } | Error::Unbuilt(_) | Error::VersionMismatch { .. })
    }
}
