//! Run configuration: TOML file values, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajact_core::model::ModelSpec;
use trajact_core::stats::DistanceMode;
use trajact_core::synth::SynthSpec;
use trajact_core::train::TrainSpec;
use trajact_core::vocab::{scenario_vocabulary, ScenarioSelector, Vocabulary};

use crate::ingest::SchemaMap;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub distance: DistanceMode,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { distance: DistanceMode::PerAction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Print the human-readable table to stdout.
    pub table: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { table: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub vocabulary: ScenarioSelector,
    /// Applies to training, fold assignment and synthesis when set.
    pub seed: Option<u64>,
    pub folds: usize,
    pub jobs: usize,
    pub deterministic: bool,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub synth: SynthSpec,
    pub schema: SchemaMap,
    pub stats: StatsConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("out"),
            vocabulary: ScenarioSelector::Scenarios2and3,
            seed: None,
            folds: 5,
            jobs: 1,
            deterministic: false,
            model: ModelSpec::default(),
            train: TrainSpec::default(),
            synth: SynthSpec::default(),
            schema: SchemaMap::default(),
            stats: StatsConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn vocab(&self) -> Vocabulary {
        scenario_vocabulary(self.vocabulary)
    }

    /// Applies the top-level seed and sizes the model's label tables to the
    /// vocabulary, then checks every section.
    pub fn finalize(mut self) -> Result<Self, ConfigError> {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.synth.seed = seed;
        }
        let vocab = self.vocab();
        self.model.action_vocab_size = vocab.num_actions();
        self.model.agent_vocab_size = vocab.num_agent_classes();
        if self.deterministic {
            self.jobs = 1;
        }
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid("folds must be at least 2".into()));
        }
        let invalid = |e: trajact_core::Error| ConfigError::Invalid(e.to_string());
        self.model.validate().map_err(invalid)?;
        self.train.validate().map_err(invalid)?;
        self.train.apply_to(&self.model).validate().map_err(invalid)?;
        if !(self.schema.position_scale.is_finite() && self.schema.position_scale > 0.0)
            || !(self.schema.time_scale.is_finite() && self.schema.time_scale > 0.0)
        {
            return Err(ConfigError::Invalid("schema scales must be positive".into()));
        }
        if !self.schema.delimiter.is_ascii() {
            return Err(ConfigError::Invalid("schema delimiter must be ASCII".into()));
        }
        Ok(self)
    }
}
