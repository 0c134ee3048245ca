use std::path::{Path, PathBuf};

use anyhow::Context;
use mhnn::corpus::{Abbreviations, EncoderConfig};
use mhnn::dataset::DatasetConfig;
use mhnn::models::RiskVariant;
use mhnn::train::synth::{DepressionSynthSpec, RawSynthSpec, RiskSynthSpec};
use mhnn::train::{DepressionTask, RiskTask, SelectionConfig, TrainConfig};
use serde::Deserialize;

/// Contents of the `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dataset: DatasetConfig,
    pub depression: DepressionTask,
    pub risk: RiskSection,
    pub synth: SynthSection,
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub depression: DepressionSynthSpec,
    pub risk: RiskSynthSpec,
    pub raw: RawSynthSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    /// Sentence vector width.
    pub input_dim: usize,
    pub encoder: Option<EncoderConfig>,
    pub abbreviations: Option<PathBuf>,
    pub train: TrainConfig,
    pub validation_fraction: f64,
    pub dropout: Option<f64>,
    pub alpha: Option<f64>,
    pub metric_dim: Option<usize>,
    pub max_sentences: Option<usize>,
}

impl Default for RiskSection {
    fn default() -> Self {
        Self {
            input_dim: 128,
            encoder: None,
            abbreviations: None,
            train: TrainConfig::default(),
            validation_fraction: 0.15,
            dropout: None,
            alpha: None,
            metric_dim: None,
            max_sentences: None,
        }
    }
}

impl RiskSection {
    pub fn task(&self, variant: RiskVariant) -> RiskTask {
        let mut task = RiskTask::new(variant, self.input_dim);
        if let Some(e) = &self.encoder {
            task.model.encoder = e.clone();
        }
        task.train = self.train.clone();
        task.validation_fraction = self.validation_fraction;
        let m = &mut task.model;
        m.dropout = self.dropout.unwrap_or(m.dropout);
        m.alpha = self.alpha.unwrap_or(m.alpha);
        m.metric_dim = self.metric_dim.or(m.metric_dim);
        m.max_sentences = self.max_sentences.unwrap_or(m.max_sentences);
        task
    }

    pub fn abbreviations(&self) -> anyhow::Result<Abbreviations> {
        match &self.abbreviations {
            Some(p) => Ok(Abbreviations::from_file(p)?),
            None => Ok(Abbreviations::default()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub configs: usize,
    pub model_configs: usize,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            configs: 100,
            model_configs: 3,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Selection flags layered over the file's `[depression.selection]`.
pub fn selection(base: SelectionConfig, n_post: Option<usize>, n_term: Option<usize>, strategy: Option<mhnn::train::Strategy>) -> SelectionConfig {
    SelectionConfig {
        n_post: n_post.unwrap_or(base.n_post),
        n_term: n_term.unwrap_or(base.n_term),
        strategy: strategy.unwrap_or(base.strategy),
        ..base
    }
}
