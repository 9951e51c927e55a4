//! Exact flat search (the recall oracle) and the two-level IVF structure.

mod flat;
mod ivf;
mod kmeans;
mod topk;

pub use flat::FlatIndex;
pub use ivf::{default_n_clusters, Centroid, Cluster, IvfIndex, IvfParams};
pub(crate) use kmeans::mean_of;
pub use kmeans::{kmeans, KMeansResult};
pub use topk::{merge_hits, search_cluster};
