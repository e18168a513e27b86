//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! one of [`KEYS`]; later assignments override earlier ones.

use std::fmt::Display;
use std::str::FromStr;

use vipera_core::backbone::BackboneConfig;
use vipera_core::dataset::{Generator, SubsetSize};
use vipera_core::head::HeadConfig;
use vipera_core::metrics::EvalPlan;
use vipera_core::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for '{key}': {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

/// Where training and evaluation read embeddings from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// `.vemb` files named by the manifest.
    Vemb,
    /// Two-cluster synthetic embeddings keyed by video id.
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub amplitude: f32,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            amplitude: 0.1,
            noise: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backbone: BackboneConfig,
    /// `visual_tokens`/`embed_width` here are placeholders; training takes
    /// them from the data.
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub generators: Vec<Generator>,
    pub eval: EvalPlan,
    pub fewshot_sizes: Vec<SubsetSize>,
    pub fewshot_seeds: Vec<u64>,
    pub source: SourceKind,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backbone: BackboneConfig::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            generators: vec![Generator::TokenFlow, Generator::DynamiCrafter],
            eval: EvalPlan::default(),
            fewshot_sizes: vec![SubsetSize::Count(10), SubsetSize::Count(100), SubsetSize::All],
            fewshot_seeds: vec![0, 1, 2, 3, 4],
            source: SourceKind::Vemb,
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "backbone.tokens_per_frame",
    "backbone.frame_width",
    "backbone.visual_tokens",
    "backbone.visual_width",
    "backbone.embed_width",
    "backbone.max_frames",
    "backbone.seed",
    "head.tokens",
    "head.width",
    "head.prototypes",
    "head.squared_distance",
    "train.lr0",
    "train.lr_decay_factor",
    "train.plateau_epochs",
    "train.lr_min",
    "train.max_epochs",
    "train.windows",
    "train.frames_per_window",
    "train.improvement_epsilon",
    "train.seed",
    "train.generators",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "eval.windows",
    "eval.frames_per_window",
    "fewshot.sizes",
    "fewshot.seeds",
    "source",
    "synthetic.amplitude",
    "synthetic.noise",
    "synthetic.seed",
];

fn parse<T>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T: FromStr,
    T::Err: Display,
{
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            reason: "empty list".into(),
        });
    }
    Ok(items)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "backbone.tokens_per_frame" => self.backbone.tokens_per_frame = parse(key, v)?,
            "backbone.frame_width" => self.backbone.frame_width = parse(key, v)?,
            "backbone.visual_tokens" => self.backbone.visual_tokens = parse(key, v)?,
            "backbone.visual_width" => self.backbone.visual_width = parse(key, v)?,
            "backbone.embed_width" => self.backbone.embed_width = parse(key, v)?,
            "backbone.max_frames" => self.backbone.max_frames = parse(key, v)?,
            "backbone.seed" => self.backbone.seed = parse(key, v)?,
            "head.tokens" => self.head.tokens = parse(key, v)?,
            "head.width" => self.head.width = parse(key, v)?,
            "head.prototypes" => self.head.prototypes = parse(key, v)?,
            "head.squared_distance" => self.head.squared_distance = parse(key, v)?,
            "train.lr0" => self.train.lr0 = parse(key, v)?,
            "train.lr_decay_factor" => self.train.lr_decay_factor = parse(key, v)?,
            "train.plateau_epochs" => self.train.plateau_epochs = parse(key, v)?,
            "train.lr_min" => self.train.lr_min = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.windows" => self.train.train_windows = parse(key, v)?,
            "train.frames_per_window" => self.train.frames_per_window = parse(key, v)?,
            "train.improvement_epsilon" => self.train.improvement_epsilon = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.generators" => self.generators = parse_list(key, v)?,
            "train.adam_beta1" => self.train.adam.beta1 = parse(key, v)?,
            "train.adam_beta2" => self.train.adam.beta2 = parse(key, v)?,
            "train.adam_eps" => self.train.adam.eps = parse(key, v)?,
            "eval.windows" => self.eval.windows = parse(key, v)?,
            "eval.frames_per_window" => self.eval.frames_per_window = parse(key, v)?,
            "fewshot.sizes" => self.fewshot_sizes = parse_list(key, v)?,
            "fewshot.seeds" => self.fewshot_seeds = parse_list(key, v)?,
            "source" => {
                self.source = match v {
                    "vemb" => SourceKind::Vemb,
                    "synthetic" => SourceKind::Synthetic,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected 'vemb' or 'synthetic'".into(),
                        })
                    }
                }
            }
            "synthetic.amplitude" => self.synthetic.amplitude = parse(key, v)?,
            "synthetic.noise" => self.synthetic.noise = parse(key, v)?,
            "synthetic.seed" => self.synthetic.seed = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Range checks across sections, reported as the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |key: &str, r: vipera_core::Result<()>| {
            r.map_err(|e| ConfigError::Value {
                key: key.into(),
                value: String::new(),
                reason: e.to_string(),
            })
        };
        wrap("backbone", self.backbone.validate())?;
        wrap("head", self.head.validate())?;
        wrap("train", self.train.validate())?;
        if self.eval.windows == 0 || self.eval.frames_per_window == 0 {
            return Err(ConfigError::Value {
                key: "eval".into(),
                value: String::new(),
                reason: "windows and frames_per_window must be >= 1".into(),
            });
        }
        Ok(())
    }
}
