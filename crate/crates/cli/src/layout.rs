//! Fixed output layout: `splits/`, `checkpoints/`, `metrics/`, `traces/`.

use std::fs;
use std::path::{Path, PathBuf};

use rawnp::config::RunConfig;
use rawnp::train::report::ArtifactHeader;
use rawnp::train::Ablation;

use crate::error::{CliError, Result};

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            root: config.output.clone(),
        }
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("splits").join("split.json")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("checkpoints").join("embeddings.ckpt")
    }

    pub fn embeddings_meta(&self) -> PathBuf {
        self.root.join("checkpoints").join("embeddings.meta")
    }

    pub fn best_model(&self, ablation: Ablation) -> PathBuf {
        self.root.join("checkpoints").join(format!("model-{ablation}.best.ckpt"))
    }

    pub fn last_model(&self, ablation: Ablation) -> PathBuf {
        self.root.join("checkpoints").join(format!("model-{ablation}.last.ckpt"))
    }

    pub fn pretrain_trace(&self) -> PathBuf {
        self.root.join("traces").join("pretrain.csv")
    }

    pub fn train_trace(&self, ablation: Ablation) -> PathBuf {
        self.root.join("traces").join(format!("train-{ablation}.csv"))
    }

    pub fn metrics(&self, name: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{name}.csv"))
    }
}

pub fn header(config: &RunConfig) -> ArtifactHeader {
    ArtifactHeader {
        config_hash: config.hash(),
        seed: config.seed,
    }
}

/// Fails with an error naming the command that produces `path`.
pub fn require(path: &Path, what: &'static str, step: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            what,
            path: path.display().to_string(),
            step,
        })
    }
}

/// Writes through a temporary sibling and renames, so an interrupted run
/// never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
