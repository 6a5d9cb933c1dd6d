//! Experiment configuration: a TOML file with CLI-flag overrides. The config
//! hash embedded in artifacts covers only the semantic knobs, never paths,
//! so identical experiments in different directories produce identical
//! artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ptae_core::fixtures::CorpusConfig;
use ptae_core::pipeline::PipelineConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Dataset manifest path (written by gen-fixtures).
    pub manifest: PathBuf,
    /// Artifact output directory.
    pub out_dir: PathBuf,
    /// Attack task: csi | osi | sv.
    pub task: String,
    /// Target speaker label.
    pub target: String,
    pub corpus: CorpusConfig,
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 7,
            manifest: PathBuf::from("fixtures/manifest.json"),
            out_dir: PathBuf::from("out"),
            task: "csi".into(),
            target: "spk0".into(),
            corpus: CorpusConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// The hashed view: everything except file-system locations.
#[derive(Serialize)]
struct HashedView<'a> {
    schema_version: u32,
    seed: u64,
    task: &'a str,
    target: &'a str,
    corpus: &'a CorpusConfig,
    pipeline: &'a PipelineConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("bad config {}: {e}", path.display()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            anyhow::bail!("unsupported config schema version {}", cfg.schema_version);
        }
        Ok(cfg)
    }

    /// Apply universal overrides and propagate the seed into the sections.
    pub fn apply_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.out_dir = out;
        }
        self.corpus.seed = self.seed;
        self.pipeline.seed = self.seed;
        self
    }

    pub fn config_hash(&self) -> anyhow::Result<String> {
        let view = HashedView {
            schema_version: self.schema_version,
            seed: self.seed,
            task: &self.task,
            target: &self.target,
            corpus: &self.corpus,
            pipeline: &self.pipeline,
        };
        Ok(ptae_core::report::config_hash(&view)?)
    }
}
