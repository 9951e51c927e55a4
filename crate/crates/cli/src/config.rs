//! TOML settings file. Every key is optional; missing keys take defaults.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lazyrag::cache::{capacity_for_budget, CacheConfig, ThresholdRule, DEFAULT_MEMORY_BUDGET_BYTES};
use lazyrag::cost::{DEFAULT_GEN_RATE, DEFAULT_LOAD_OVERHEAD};
use lazyrag::embedder::{DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
use lazyrag::engine::{EngineConfig, DEFAULT_MERGE_FACTOR, DEFAULT_SPLIT_FACTOR};
use lazyrag::index::IvfParams;
use lazyrag::{CostModel, EmbedderSpec};
use serde::{Deserialize, Serialize};

/// Name of the effective settings file saved next to a built store.
pub const STORE_SETTINGS_FILE: &str = "settings.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub embedder: EmbedderSection,
    pub cost: CostSection,
    pub index: IndexSection,
    pub cache: CacheSection,
    pub mutation: MutationSection,
    pub chunking: ChunkingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub dimension: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        let s = EmbedderSpec::default();
        EmbedderSection { dimension: s.dimension, seed: s.seed, normalize: s.normalize }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub gen_rate: f64,
    /// Bytes per second; calibrated to the embedding size when absent.
    pub load_rate: Option<f64>,
    pub load_overhead: f64,
    /// Seconds; the calibrated crossover latency when absent.
    pub slo: Option<f64>,
    pub distance_cost: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            gen_rate: DEFAULT_GEN_RATE,
            load_rate: None,
            load_overhead: DEFAULT_LOAD_OVERHEAD,
            slo: None,
            distance_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub n_clusters: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for IndexSection {
    fn default() -> Self {
        let p = IvfParams::default();
        IndexSection { n_clusters: p.n_clusters, kmeans_iters: p.kmeans_iters, seed: p.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub memory_budget_bytes: u64,
    /// Overrides the budget-derived capacity.
    pub capacity_bytes: Option<u64>,
    pub decay_factor: f64,
    pub alpha: f64,
    /// Threshold step in seconds; one hundredth of the SLO when absent.
    pub step: Option<f64>,
    pub rule: ThresholdRule,
}

impl Default for CacheSection {
    fn default() -> Self {
        let c = CacheConfig::for_slo(1.0);
        CacheSection {
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET_BYTES,
            capacity_bytes: None,
            decay_factor: c.decay_factor,
            alpha: c.alpha,
            step: None,
            rule: c.rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationSection {
    pub split_factor: f64,
    pub merge_factor: f64,
}

impl Default for MutationSection {
    fn default() -> Self {
        MutationSection { split_factor: DEFAULT_SPLIT_FACTOR, merge_factor: DEFAULT_MERGE_FACTOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingSection {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingSection {
    fn default() -> Self {
        ChunkingSection { chunk_size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_CHUNK_OVERLAP }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Settings> {
        path.map(Settings::load).unwrap_or_else(|| Ok(Settings::default()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing settings")?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn embedder_spec(&self) -> EmbedderSpec {
        EmbedderSpec {
            dimension: self.embedder.dimension,
            seed: self.embedder.seed,
            normalize: self.embedder.normalize,
        }
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let calibrated = CostModel::calibrated(self.embedder.dimension);
        let model = CostModel {
            gen_rate: self.cost.gen_rate,
            load_rate: self.cost.load_rate.unwrap_or(calibrated.load_rate),
            load_overhead: self.cost.load_overhead,
            slo: self.cost.slo.unwrap_or(calibrated.slo),
            embedding_byte_size: calibrated.embedding_byte_size,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn cache_config(&self, slo: f64) -> CacheConfig {
        CacheConfig {
            capacity_bytes: self.cache.capacity_bytes.unwrap_or(capacity_for_budget(self.cache.memory_budget_bytes)),
            decay_factor: self.cache.decay_factor,
            alpha: self.cache.alpha,
            step: self.cache.step.unwrap_or(slo / 100.0),
            rule: self.cache.rule,
        }
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        let cost = self.cost_model()?;
        let config = EngineConfig {
            embedder: self.embedder_spec(),
            cost,
            ivf: IvfParams {
                n_clusters: self.index.n_clusters,
                kmeans_iters: self.index.kmeans_iters,
                seed: self.index.seed,
            },
            cache: self.cache_config(cost.slo),
            split_factor: self.mutation.split_factor,
            merge_factor: self.mutation.merge_factor,
            distance_cost: self.cost.distance_cost,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_engine_defaults() {
        let s: Settings = toml::from_str("").unwrap();
        assert_eq!(s.engine_config().unwrap(), EngineConfig::default());
    }

    #[test]
    fn partial_sections_and_round_trip() {
        let s: Settings =
            toml::from_str("[cost]\nslo = 1.5\n[cache]\nrule = \"prose\"\ncapacity_bytes = 1000\n").unwrap();
        let c = s.engine_config().unwrap();
        assert_eq!(c.cost.slo, 1.5);
        assert_eq!(c.cache.step, 0.015);
        assert_eq!(c.cache.capacity_bytes, 1000);
        assert_eq!(c.cache.rule, ThresholdRule::Prose);
        let back: Settings = toml::from_str(&toml::to_string_pretty(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("[cost]\ngen_rat = 1.0\n").is_err());
        assert!(toml::from_str::<Settings>("[bogus]\n").is_err());
    }
}
