use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classify::{FeatureSpec, SweepAxis, TrainConfig, DEFAULT_RESIZE};
use crate::error::{Error, Result};
use crate::llm::{HttpConfig, IclConfig, SummaryConfig};
use crate::manifest::CaptionField;
use crate::par::Parallelism;
use crate::textlens::{LdaConfig, TokenizerConfig};
use crate::transforms::TransformSpec;

pub const DEFAULT_OUTPUT_DIR: &str = "biaslens-out";

/// Reads a TOML config, or the defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn default_resize() -> usize {
    DEFAULT_RESIZE
}

fn default_trials() -> usize {
    3
}

fn default_train_count() -> usize {
    100
}

fn default_val_count() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub output_dir: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub parallelism: Parallelism,
    pub transform: TransformSpec,
    /// Resize before transforming; 0 keeps the decoded size.
    pub resize: usize,
    /// Process at most this many samples per manifest.
    pub limit: Option<usize>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            output_dir: None,
            manifests: Vec::new(),
            parallelism: Parallelism::default(),
            transform: TransformSpec::Identity,
            resize: 0,
            limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoSection {
    #[serde(default)]
    pub manifest: usize,
    pub k: usize,
    pub sizes: Vec<usize>,
    #[serde(default = "default_val_count_pseudo")]
    pub val_per_dataset: usize,
}

fn default_val_count_pseudo() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub parallelism: Parallelism,
    /// Needed for bag-of-objects features.
    pub object_vocab: Option<PathBuf>,
    pub resize: usize,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub transform: TransformSpec,
    pub features: FeatureSpec,
    pub train: TrainConfig,
    /// Also export per-image mean colors.
    pub mean_rgb: bool,
    pub pseudo: Option<PseudoSection>,
    /// Only read by `sweep`.
    pub sweep: Option<SweepAxis>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            seed: None,
            output_dir: None,
            manifests: Vec::new(),
            parallelism: Parallelism::default(),
            object_vocab: None,
            resize: default_resize(),
            n_trials: default_trials(),
            n_train: default_train_count(),
            n_val: default_val_count(),
            transform: TransformSpec::Identity,
            features: FeatureSpec::default(),
            train: TrainConfig::default(),
            mean_rgb: true,
            pseudo: None,
            sweep: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectsConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub parallelism: Parallelism,
    pub vocab: Option<PathBuf>,
    /// Single-label vocabulary for the majority-share analyses. When absent
    /// the sorted set of labels found in the manifests is used.
    pub label_vocab: Option<PathBuf>,
    /// Run the label analyses (requires a label on every sample).
    pub labels: bool,
    pub min_support: u64,
    pub top_k: usize,
    pub min_frequency: u64,
    pub correlation_min_support: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub train: TrainConfig,
}

impl Default for ObjectsConfig {
    fn default() -> Self {
        ObjectsConfig {
            seed: None,
            output_dir: None,
            manifests: Vec::new(),
            parallelism: Parallelism::default(),
            vocab: None,
            label_vocab: None,
            labels: false,
            min_support: crate::objects::DEFAULT_MIN_SUPPORT,
            top_k: 8,
            min_frequency: 20,
            correlation_min_support: 1,
            n_train: default_train_count(),
            n_val: default_val_count(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    #[default]
    Freq,
    Lda,
    Classify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub parallelism: Parallelism,
    pub mode: TextMode,
    pub caption: CaptionField,
    /// Used by `lda` and `classify`; `freq` always adds bigrams.
    pub tokenizer: TokenizerConfig,
    pub n_top: usize,
    pub lda: LdaConfig,
    pub top_words: usize,
    pub vocab_size: usize,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train: TrainConfig,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            seed: None,
            output_dir: None,
            manifests: Vec::new(),
            parallelism: Parallelism::default(),
            mode: TextMode::default(),
            caption: CaptionField::default(),
            tokenizer: TokenizerConfig::default(),
            n_top: 100,
            lda: LdaConfig::default(),
            top_words: 5,
            vocab_size: 1000,
            n_trials: default_trials(),
            n_train: default_train_count(),
            n_val: default_val_count(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[default]
    Icl,
    Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransportConfig {
    /// Scripted replies, cycled.
    Mock { responses: Vec<String> },
    /// Chat-completion endpoint from the environment.
    Http(HttpConfig),
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig::Http(HttpConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub mode: LlmMode,
    pub caption: CaptionField,
    pub icl: IclConfig,
    pub summary: SummaryConfig,
    pub transport: TransportConfig,
    /// Prompt/response log, relative to the output directory.
    pub log_file: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            seed: None,
            output_dir: None,
            manifests: Vec::new(),
            mode: LlmMode::default(),
            caption: CaptionField::default(),
            icl: IclConfig::default(),
            summary: SummaryConfig::default(),
            transport: TransportConfig::default(),
            log_file: "llm_log.jsonl".into(),
        }
    }
}

pub fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidConfig(format!("`{command}` is stochastic and needs a seed (config `seed` or --seed)")))
}

pub fn require_manifests(manifests: &[PathBuf]) -> Result<()> {
    if manifests.is_empty() {
        return Err(Error::InvalidConfig("no manifests given (config `manifests` or --manifests)".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_config_parses() {
        let c: ClassifyConfig = toml::from_str(
            r#"
            seed = 7
            manifests = ["a.jsonl", "b.jsonl"]
            n_trials = 2
            [transform]
            transform = "patch_shuffle"
            patch = 16
            mode = "random_order"
            [features]
            kind = "mean_rgb"
            [train]
            epochs = 5
            [sweep]
            axis = "patch_size"
            values = [1, 16]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.sweep, Some(SweepAxis::PatchSize(vec![1, 16])));
        assert!(toml::from_str::<ClassifyConfig>("bogus = 1").is_err());
    }

    #[test]
    fn llm_transport_parses() {
        let c: LlmConfig = toml::from_str("[transport]\nkind = \"mock\"\nresponses = [\"1\"]").unwrap();
        assert_eq!(c.transport, TransportConfig::Mock { responses: vec!["1".into()] });
        let c: LlmConfig = toml::from_str("[transport]\nkind = \"http\"\nmodel = \"x\"").unwrap();
        assert!(matches!(c.transport, TransportConfig::Http(h) if h.model == "x" && h.retries == 3));
    }
}
