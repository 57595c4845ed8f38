//! Saving and restoring trained models and pretrained embeddings.
//!
//! The architecture hyperparameters travel in the checkpoint metadata under
//! `model.*` keys so a checkpoint can be reloaded without its config file.

use std::collections::BTreeMap;

use autodiff::Checkpoint;

use super::{ModelConfig, RawNp};
use crate::error::{Error, Result};
use crate::pretrain::EmbeddingTable;

const ENTITY: &str = "embed.entity";
const RELATION: &str = "embed.relation";

fn meta<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    let raw = ckpt
        .metadata
        .get(key)
        .ok_or_else(|| Error::Invalid(format!("checkpoint metadata lacks '{key}'")))?;
    raw.parse()
        .map_err(|_| Error::Invalid(format!("checkpoint metadata '{key}' = '{raw}' is malformed")))
}

impl RawNp {
    /// Every parameter plus the architecture; `extra` entries are added to
    /// the metadata verbatim.
    pub fn to_checkpoint(&self, extra: BTreeMap<String, String>) -> Checkpoint {
        let mut metadata = extra;
        let c = &self.config;
        for (k, v) in [
            ("model.dim", c.dim.to_string()),
            ("model.hidden", c.hidden.to_string()),
            ("model.walk_length", c.walk_length.to_string()),
            ("model.dropout", c.dropout.to_string()),
            ("model.num_entities", c.num_entities.to_string()),
            ("model.num_relations", c.num_relations.to_string()),
            ("model.motifs", self.motifs_enabled().to_string()),
        ] {
            metadata.insert(k.to_string(), v);
        }
        Checkpoint::from_store(&self.store, metadata)
    }

    /// Rebuilds a model from [`RawNp::to_checkpoint`] output.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig {
            dim: meta(ckpt, "model.dim")?,
            hidden: meta(ckpt, "model.hidden")?,
            walk_length: meta(ckpt, "model.walk_length")?,
            dropout: meta(ckpt, "model.dropout")?,
            num_entities: meta(ckpt, "model.num_entities")?,
            num_relations: meta(ckpt, "model.num_relations")?,
        };
        let motifs: bool = meta(ckpt, "model.motifs")?;
        let mut model = RawNp::new(config, 0);
        ckpt.restore_into(&mut model.store)?;
        if !motifs {
            model.disable_motifs();
        }
        Ok(model)
    }
}

impl EmbeddingTable {
    pub fn to_checkpoint(&self, metadata: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            metadata,
            arrays: vec![
                (ENTITY.to_string(), self.entity.clone()),
                (RELATION.to_string(), self.relation.clone()),
            ],
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |name: &str| {
            ckpt.get(name)
                .cloned()
                .ok_or_else(|| Error::Invalid(format!("embedding checkpoint lacks '{name}'")))
        };
        let table = Self {
            entity: get(ENTITY)?,
            relation: get(RELATION)?,
        };
        if table.entity.ncols() != table.relation.ncols() {
            return Err(Error::Invalid(
                "entity and relation embeddings differ in dimension".into(),
            ));
        }
        Ok(table)
    }
}
