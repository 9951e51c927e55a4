//! Simulated cost model: generation and storage-load rates plus the
//! retrieval latency objective.
//!
//! Defaults are calibrated so that a cluster of 24 000 characters costs the
//! same to regenerate as to load (47 default-size chunks). Smaller clusters
//! regenerate faster than they load; larger ones load faster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GEN_RATE: f64 = 8000.0;
pub const CROSSOVER_CHARS: u64 = 24_000;
/// Embeddings in a crossover-size cluster: ceil(24000 / 512).
pub const CROSSOVER_EMBEDDINGS: u64 = 47;
/// Fixed latency of reading one cluster file (open, seek, header).
pub const DEFAULT_LOAD_OVERHEAD: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Embedding generation throughput, characters per second.
    pub gen_rate: f64,
    /// Storage read throughput, bytes per second.
    pub load_rate: f64,
    /// Fixed seconds per non-empty cluster load.
    pub load_overhead: f64,
    /// Retrieval latency objective, seconds.
    pub slo: f64,
    /// Bytes per stored embedding (4 × dimension).
    pub embedding_byte_size: u64,
}

impl CostModel {
    pub fn new(gen_rate: f64, load_rate: f64, load_overhead: f64, slo: f64, embedding_byte_size: u64) -> Result<Self> {
        let model = CostModel { gen_rate, load_rate, load_overhead, slo, embedding_byte_size };
        model.validate()?;
        Ok(model)
    }

    /// The default calibration for embeddings of `dimension` f32 components.
    ///
    /// The SLO sits at the crossover latency, so a cluster is persisted
    /// exactly when loading it beats regenerating it.
    pub fn calibrated(dimension: usize) -> Self {
        let embedding_byte_size = 4 * dimension as u64;
        let crossover_latency = CROSSOVER_CHARS as f64 / DEFAULT_GEN_RATE;
        let transfer = crossover_latency - DEFAULT_LOAD_OVERHEAD;
        let load_rate = (CROSSOVER_EMBEDDINGS * embedding_byte_size) as f64 / transfer;
        CostModel {
            gen_rate: DEFAULT_GEN_RATE,
            load_rate,
            load_overhead: DEFAULT_LOAD_OVERHEAD,
            slo: crossover_latency,
            embedding_byte_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("gen_rate", self.gen_rate)?;
        positive("load_rate", self.load_rate)?;
        if !(self.load_overhead >= 0.0 && self.load_overhead.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "load_overhead must be non-negative, got {}",
                self.load_overhead
            )));
        }
        // slo = 0 is accepted: it persists every non-empty cluster.
        if !(self.slo >= 0.0 && self.slo.is_finite()) {
            return Err(Error::InvalidParameter(format!("slo must be non-negative, got {}", self.slo)));
        }
        if self.embedding_byte_size == 0 {
            return Err(Error::InvalidParameter("embedding_byte_size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::calibrated(crate::embedder::DEFAULT_DIMENSION)
    }
}
