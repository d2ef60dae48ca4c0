use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_image_dir, synth_generate, GroupedDataset, ImageDirConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::loss::Hyperparameters;
use crate::nn::Architecture;
use crate::train::{Mode, OptimizerKind, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthConfig),
    Directory(ImageDirConfig),
}

impl DatasetSource {
    /// Builds the dataset for one seed. Synthetic data is regenerated per
    /// seed; directory data is re-split per seed.
    pub fn load(&self, seed: u64) -> Result<GroupedDataset> {
        match self {
            DatasetSource::Synthetic(cfg) => synth_generate(cfg, seed),
            DatasetSource::Directory(cfg) => load_image_dir(cfg, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "yes")]
    pub shuffle_target: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            alpha: 1.0,
            beta: 1.0,
            shuffle_target: true,
        }
    }
}

fn default_lr() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adagrad
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Which models to train for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(default = "yes")]
    pub baseline: bool,
    /// One baseline-with-dropout run per rate.
    #[serde(default)]
    pub dropout: Vec<f64>,
    /// One simultaneous-learning run per lambda.
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

impl Default for ModesSection {
    fn default() -> Self {
        ModesSection {
            baseline: true,
            dropout: Vec::new(),
            lambdas: vec![0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpretSection {
    #[serde(default = "ten")]
    pub top_classes: usize,
    #[serde(default = "five")]
    pub top_instances: usize,
}

impl Default for InterpretSection {
    fn default() -> Self {
        InterpretSection {
            top_classes: 10,
            top_instances: 5,
        }
    }
}

fn ten() -> usize {
    10
}
fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSource,
    pub architecture: Architecture,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub modes: ModesSection,
    /// Fraction of the target training split kept (stratified per class).
    #[serde(default = "one")]
    pub reduce: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub interpret: InterpretSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.reduce > 0.0 && self.reduce <= 1.0) {
            return bad(format!("reduce = {} must lie in (0, 1]", self.reduce));
        }
        if let Some(l) = self.modes.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return bad(format!("lambda {l} outside [0, 1]"));
        }
        if let Some(r) = self.modes.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("dropout rate {r} outside [0, 1)"));
        }
        if !self.modes.baseline && self.modes.dropout.is_empty() && self.modes.lambdas.is_empty() {
            return bad("no modes selected".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Hyperparameters::new(1.0, self.training.alpha, self.training.beta)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train_config(Mode::Baseline, 1.0, 0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Trainer settings for one run.
    pub fn train_config(&self, mode: Mode, lambda: f64, seed: u64) -> TrainConfig {
        let t = &self.training;
        let hyper = match mode {
            Mode::Simultaneous => Hyperparameters {
                lambda,
                alpha: t.alpha,
                beta: t.beta,
            },
            _ => Hyperparameters {
                lambda: 1.0,
                alpha: 0.0,
                beta: 0.0,
            },
        };
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            hyper,
            mode,
            seed,
            shuffle_target: t.shuffle_target,
        }
    }

    /// Number of target classes, when known without loading data.
    pub fn target_classes(&self) -> Option<usize> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => Some(s.k),
            DatasetSource::Directory(_) => None,
        }
    }
}
