//! Pipeline configuration: a JSON file whose values command-line flags may
//! override. Component seeds are always derived from the root `seed`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use psast_core::analysis::{Linkage, Metric};
use psast_core::{seed, ForestConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus_dir: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub subtrees: SubtreeOptions,
    pub train: TrainConfig,
    pub forest: ForestConfig,
    pub classify: ClassifyOptions,
    pub analysis: AnalysisOptions,
    pub synth: SynthOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus_dir: None,
            model_path: None,
            out_dir: PathBuf::from("out"),
            subtrees: SubtreeOptions::default(),
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            classify: ClassifyOptions::default(),
            analysis: AnalysisOptions::default(),
            synth: SynthOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubtreeOptions {
    /// Draw this many subtrees without replacement; `None` keeps all.
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Pick `forest.max_depth` by cross-validation over `1..=max_depth_grid`.
    pub tune_depth: bool,
    pub max_depth_grid: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            tune_depth: false,
            max_depth_grid: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub metric: Metric,
    pub linkage: Linkage,
    pub neighbors: usize,
    pub clusters: usize,
    pub kmeans_max_iters: usize,
    /// Drop a trailing `Ast` from type names in dendrogram output.
    pub strip_ast_suffix: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            linkage: Linkage::Average,
            neighbors: 5,
            clusters: 8,
            kmeans_max_iters: 300,
            strip_ast_suffix: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub families: usize,
    pub scripts_per_family: usize,
    pub type_count: usize,
    pub separable: bool,
    pub twins: Vec<(String, String)>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            families: 8,
            scripts_per_family: 100,
            type_count: 37,
            separable: true,
            twins: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Defaults, overlaid by `path` when given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Pushes the root seed into every component.
    pub fn resolve(mut self) -> Self {
        self.train.seed = seed::derive(self.seed, seed::TRAIN);
        self.forest.seed = seed::derive(self.seed, seed::FOREST);
        self
    }

    pub fn sample_seed(&self) -> u64 {
        seed::derive(self.seed, seed::SAMPLE)
    }

    pub fn kmeans_seed(&self) -> u64 {
        seed::derive(self.seed, seed::KMEANS)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
