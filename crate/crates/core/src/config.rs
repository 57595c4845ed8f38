//! Flat `key = value` run configuration.
//!
//! One file holds every hyperparameter; `--set key=value` overrides are
//! applied on top. The canonical rendering (every key, sorted) is hashed
//! into the header line of each output artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::SplitSpec;
use crate::model::ModelConfig;
use crate::pretrain::PretrainConfig;
use crate::train::{Ablation, RankMode, TrainConfig};
use crate::walk::WalkConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Triple files, tab-separated `head relation tail`.
    pub dataset: Vec<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub split_min_degree: usize,
    pub split_max_degree: usize,
    pub split_train: usize,
    pub split_valid: usize,
    pub split_test: usize,
    pub dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub walks: usize,
    pub walk_length: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_margin: f64,
    pub pretrain_patience: usize,
    pub k: usize,
    pub k_min: usize,
    pub lr: f64,
    pub margin: f64,
    pub negatives: usize,
    pub samples: usize,
    pub epochs: usize,
    pub max_queries: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub ablation: Ablation,
    pub eval_mode: RankMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: Vec::new(),
            output: PathBuf::from("runs"),
            seed: 0,
            workers: 1,
            split_min_degree: 10,
            split_max_degree: 100,
            split_train: 2500,
            split_valid: 1000,
            split_test: 1500,
            dim: 100,
            hidden: 100,
            dropout: 0.3,
            walks: 5,
            walk_length: 10,
            pretrain_epochs: 500,
            pretrain_batch_size: 512,
            pretrain_lr: 1e-3,
            pretrain_margin: 1.0,
            pretrain_patience: 20,
            k: 3,
            k_min: 1,
            lr: 1e-3,
            margin: 1.0,
            negatives: 32,
            samples: 1,
            epochs: 100,
            max_queries: 0,
            eval_every: 1,
            patience: 10,
            ablation: Ablation::Full,
            eval_mode: RankMode::Filtered,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("config key '{key}': cannot parse '{value}'")))
}

impl RunConfig {
    /// Reads a config file over the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason: "expected key = value".into(),
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(config)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("override '{assignment}' is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "output" => self.output = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "split.min_degree" => self.split_min_degree = parse(key, value)?,
            "split.max_degree" => self.split_max_degree = parse(key, value)?,
            "split.train" => self.split_train = parse(key, value)?,
            "split.valid" => self.split_valid = parse(key, value)?,
            "split.test" => self.split_test = parse(key, value)?,
            "model.dim" => self.dim = parse(key, value)?,
            "model.hidden" => self.hidden = parse(key, value)?,
            "model.dropout" => self.dropout = parse(key, value)?,
            "walk.walks" => self.walks = parse(key, value)?,
            "walk.length" => self.walk_length = parse(key, value)?,
            "pretrain.epochs" => self.pretrain_epochs = parse(key, value)?,
            "pretrain.batch_size" => self.pretrain_batch_size = parse(key, value)?,
            "pretrain.lr" => self.pretrain_lr = parse(key, value)?,
            "pretrain.margin" => self.pretrain_margin = parse(key, value)?,
            "pretrain.patience" => self.pretrain_patience = parse(key, value)?,
            "train.k" => self.k = parse(key, value)?,
            "train.k_min" => self.k_min = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.margin" => self.margin = parse(key, value)?,
            "train.negatives" => self.negatives = parse(key, value)?,
            "train.samples" => self.samples = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.max_queries" => self.max_queries = parse(key, value)?,
            "train.eval_every" => self.eval_every = parse(key, value)?,
            "train.patience" => self.patience = parse(key, value)?,
            "train.ablation" => self.ablation = value.parse()?,
            "eval.mode" => self.eval_mode = value.parse()?,
            other => return Err(Error::Invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its value, sorted by key.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let dataset = self
            .dataset
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        BTreeMap::from([
            ("dataset", dataset),
            ("output", self.output.display().to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("split.min_degree", self.split_min_degree.to_string()),
            ("split.max_degree", self.split_max_degree.to_string()),
            ("split.train", self.split_train.to_string()),
            ("split.valid", self.split_valid.to_string()),
            ("split.test", self.split_test.to_string()),
            ("model.dim", self.dim.to_string()),
            ("model.hidden", self.hidden.to_string()),
            ("model.dropout", self.dropout.to_string()),
            ("walk.walks", self.walks.to_string()),
            ("walk.length", self.walk_length.to_string()),
            ("pretrain.epochs", self.pretrain_epochs.to_string()),
            ("pretrain.batch_size", self.pretrain_batch_size.to_string()),
            ("pretrain.lr", self.pretrain_lr.to_string()),
            ("pretrain.margin", self.pretrain_margin.to_string()),
            ("pretrain.patience", self.pretrain_patience.to_string()),
            ("train.k", self.k.to_string()),
            ("train.k_min", self.k_min.to_string()),
            ("train.lr", self.lr.to_string()),
            ("train.margin", self.margin.to_string()),
            ("train.negatives", self.negatives.to_string()),
            ("train.samples", self.samples.to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.max_queries", self.max_queries.to_string()),
            ("train.eval_every", self.eval_every.to_string()),
            ("train.patience", self.patience.to_string()),
            ("train.ablation", self.ablation.to_string()),
            ("eval.mode", self.eval_mode.to_string()),
        ])
    }

    /// Canonical `key = value` text; loading it reproduces this config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the rendering without `output` and `workers`, hex
    /// encoded. Those two keys never change an artifact's content, so runs
    /// in different directories or with different thread counts share a
    /// hash.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.entries() {
            if k != "output" && k != "workers" {
                let _ = writeln!(text, "{k} = {v}");
            }
        }
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(missing) = self.dataset.iter().find(|p| !p.exists()) {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("dataset file {} does not exist", missing.display()),
            )));
        }
        if self.dataset.is_empty() {
            return Err(Error::Invalid("no dataset files configured (key 'dataset')".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.walk_length == 0 || self.walk_length > u16::MAX as usize {
            return Err(Error::Invalid(format!("walk length {} out of range", self.walk_length)));
        }
        self.train_config().validate()
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            min_degree: self.split_min_degree,
            max_degree: self.split_max_degree,
            train: self.split_train,
            valid: self.split_valid,
            test: self.split_test,
            seed: self.seed,
        }
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            walks: self.walks,
            length: self.walk_length,
            inverse_edges: true,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            dim: self.dim,
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            margin: self.pretrain_margin,
            patience: self.pretrain_patience,
            seed: self.seed,
            ..PretrainConfig::default()
        }
    }

    pub fn model_config(&self, num_entities: usize, num_oriented_relations: usize) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            hidden: self.hidden,
            walk_length: self.walk_length,
            dropout: self.dropout,
            num_entities,
            num_relations: num_oriented_relations,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            k_min: self.k_min,
            lr: self.lr,
            margin: self.margin,
            negatives: self.negatives,
            samples: self.samples,
            epochs: self.epochs,
            seed: self.seed,
            ablation: self.ablation,
            max_queries: self.max_queries,
            eval_every: self.eval_every,
            patience: self.patience,
            walks: self.walk_config(),
        }
    }
}
