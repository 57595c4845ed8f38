//! Shared fixtures: small planted-pattern datasets and models.

#![allow(dead_code)]

use rawnp::kg::{generate_unseen_splits, SplitSpec};
use rawnp::model::ModelConfig;
use rawnp::pretrain::PretrainConfig;
use rawnp::synth::{planted_graph, planted_split_spec, PlantedConfig};
use rawnp::train::{initialize_model, Dataset};
use rawnp::model::RawNp;

/// The default planted graph with its default split.
pub fn planted(seed: u64) -> Dataset {
    let kg = planted_graph(&PlantedConfig { seed, ..PlantedConfig::default() }).unwrap();
    let split = generate_unseen_splits(&kg, &planted_split_spec(seed)).unwrap();
    Dataset::new(kg, split).unwrap()
}

/// A 40-entity planted graph for checks that touch every parameter.
pub fn tiny_planted(seed: u64) -> Dataset {
    let kg = planted_graph(&PlantedConfig { entities: 40, clusters: 2, seed, ..PlantedConfig::default() }).unwrap();
    let spec = SplitSpec { min_degree: 3, max_degree: 40, train: 6, valid: 2, test: 2, seed };
    let split = generate_unseen_splits(&kg, &spec).unwrap();
    Dataset::new(kg, split).unwrap()
}

pub fn model_config(data: &Dataset, dim: usize) -> ModelConfig {
    ModelConfig {
        dim,
        hidden: dim,
        dropout: 0.3,
        ..ModelConfig::new(data.kg.num_entities(), data.kg.num_oriented_relations())
    }
}

/// Pretrained-and-initialized model at a small dimension.
pub fn initialized(data: &Dataset, dim: usize, seed: u64) -> RawNp {
    let pc = PretrainConfig { dim, epochs: 30, batch_size: 128, lr: 1e-2, seed, ..PretrainConfig::default() };
    initialize_model(data, model_config(data, dim), &pc, seed).unwrap()
}
