//! Meta-training and evaluation.
//!
//! Every training entity becomes one few-shot task per epoch (support size
//! drawn uniformly from `k_min..=k`). Each task is one Adam step on its
//! objective. After every `eval_every` epochs the validation entities are
//! ranked and the parameters with the best validation MRR are retained.

mod elbo;
mod eval;
mod loss;
pub mod report;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use autodiff::{Adam, AdamConfig, Graph, Mode, ParamStore};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{make_task, EntityId, KnowledgeGraph, Split};
use crate::model::{ModelConfig, RawNp};
use crate::pretrain::{init_unseen, pretrain, PretrainConfig};
use crate::rng;
use crate::walk::{MotifCache, WalkConfig};

pub use elbo::{elbo_loss, sample_episode, ElboTerms, Episode};
pub use eval::{
    build_tasks, motif_table, rank_candidates, ClassFilter, Evaluator, Metrics, MetricsReport,
    QueryOutcome, RankMode, TaskOutcome,
};
pub use loss::{entropy_of_latent, kl_diag_gaussians, kl_graph, margin_rank_graph, margin_rank_loss};

/// Sub-tags of [`rng::tag::TRAIN`] streams.
const ORDER: u64 = 1;
const SHOTS: u64 = 2;
const DROPOUT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    Full,
    /// Motif pathway removed.
    NoRaw,
    /// Deterministic latent: the prior mean, no posterior and no KL term.
    NoNp,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoRaw => "no-raw",
            Ablation::NoNp => "no-np",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "none" => Ok(Ablation::Full),
            "no-raw" => Ok(Ablation::NoRaw),
            "no-np" => Ok(Ablation::NoNp),
            other => Err(Error::Invalid(format!(
                "unknown ablation '{other}' (full|no-raw|no-np)"
            ))),
        }
    }
}

/// A graph with its unseen-entity split and the derived views.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Every triple; used for task construction and filtered ranking.
    pub kg: KnowledgeGraph,
    pub split: Split,
    /// Triples not touching any unseen entity.
    pub background: KnowledgeGraph,
    /// Triples not touching validation or test entities; filters the
    /// corruptions drawn during training and evaluation.
    pub train_graph: KnowledgeGraph,
    pub unseen: HashSet<EntityId>,
}

impl Dataset {
    pub fn new(kg: KnowledgeGraph, split: Split) -> Result<Self> {
        for e in split.unseen() {
            kg.check_entity(e)?;
        }
        let held_out: HashSet<EntityId> = split.valid.iter().chain(&split.test).copied().collect();
        let train_graph = kg.restrict(|t| !held_out.contains(&t.head) && !held_out.contains(&t.tail));
        Ok(Self {
            background: split.background(&kg),
            unseen: split.unseen(),
            train_graph,
            kg,
            split,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Support size used for validation and the largest sampled in training.
    pub k: usize,
    /// Smallest support size sampled in training.
    pub k_min: usize,
    pub lr: f64,
    pub margin: f64,
    pub negatives: usize,
    /// Latent samples per objective evaluation.
    pub samples: usize,
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Queries kept per training task; 0 keeps all.
    pub max_queries: usize,
    /// Validate every this many epochs; 0 disables validation.
    pub eval_every: usize,
    /// Validation rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    pub walks: WalkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 3,
            k_min: 1,
            lr: 1e-3,
            margin: 1.0,
            negatives: 32,
            samples: 1,
            epochs: 100,
            seed: 0,
            ablation: Ablation::Full,
            max_queries: 0,
            eval_every: 1,
            patience: 10,
            walks: WalkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.k == 0 || self.k_min == 0 || self.k_min > self.k {
            return bad(format!("need 1 <= k_min <= k, got k_min={} k={}", self.k_min, self.k));
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.samples == 0 || self.negatives == 0 {
            return bad("samples and negatives must be at least 1".into());
        }
        Ok(())
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub task_idx: usize,
    pub loss: f64,
    pub kl: f64,
    pub rank_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_mrr: Option<f64>,
    /// Set when this epoch produced a new best validation MRR.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<LossRecord>,
    pub epochs: Vec<EpochReport>,
    pub best_epoch: Option<usize>,
    pub best_valid_mrr: Option<f64>,
}

impl TrainOutcome {
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Training tasks of one epoch in their (seeded) visiting order.
pub fn epoch_tasks(data: &Dataset, config: &TrainConfig, epoch: usize) -> Result<Vec<crate::kg::FewShotTask>> {
    let mut shots = rng::stream(config.seed, &[rng::tag::TRAIN, SHOTS, epoch as u64]);
    let task_seed = rng::derive(config.seed, &[rng::tag::TRAIN, epoch as u64]);
    let mut tasks = Vec::with_capacity(data.split.train.len());
    for e in &data.split.train {
        let k = shots.random_range(config.k_min..=config.k);
        match make_task(&data.train_graph, *e, k, task_seed, &data.unseen) {
            Ok(mut t) => {
                if config.max_queries > 0 {
                    t.query.truncate(config.max_queries);
                }
                tasks.push(t);
            }
            Err(Error::TooFewTriples { .. }) => {
                log::debug!("training entity {e} has too few triples for k={k}");
            }
            Err(other) => return Err(other),
        }
    }
    tasks.shuffle(&mut rng::stream(config.seed, &[rng::tag::TRAIN, ORDER, epoch as u64]));
    Ok(tasks)
}

/// Meta-trains `model` in place.
///
/// `on_epoch` runs after every epoch (with the current parameters) and may
/// persist checkpoints. On return the model holds the best-validation
/// parameters. A numeric fault restores those parameters before the error
/// is returned.
pub fn train(
    model: &mut RawNp,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport, &RawNp) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.config.num_entities != data.kg.num_entities()
        || model.config.num_relations != data.kg.num_oriented_relations()
    {
        return Err(Error::Invalid("model vocabulary does not match the graph".into()));
    }
    if config.ablation == Ablation::NoRaw {
        model.disable_motifs();
    }
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0;
    let mut outcome = TrainOutcome {
        trace: Vec::new(),
        epochs: Vec::new(),
        best_epoch: None,
        best_valid_mrr: None,
    };

    let restore = |model: &mut RawNp, best: &Option<(f64, usize, ParamStore)>| {
        if let Some((_, _, store)) = best {
            model.store = store.clone();
        }
    };

    for epoch in 1..=config.epochs {
        let walk_seed = rng::derive(config.seed, &[rng::tag::WALK, epoch as u64]);
        let motifs = MotifCache::build(&data.background, &config.walks, walk_seed, 1)?;
        let tasks = epoch_tasks(data, config, epoch)?;
        let mut sum = 0.0;
        for (task_idx, task) in tasks.into_iter().enumerate() {
            let entity = task.entity.0 as u64;
            let record = match train_step(model, &mut adam, data, config, &motifs, task, epoch, entity) {
                Ok((loss, kl, rank_loss)) => LossRecord {
                    epoch,
                    task_idx,
                    loss,
                    kl,
                    rank_loss,
                },
                Err(e) => {
                    if e.is_numeric_fault() {
                        log::error!("numeric fault at epoch {epoch}, task {task_idx}: {e}");
                        restore(model, &best);
                    }
                    return Err(e);
                }
            };
            sum += record.loss;
            outcome.trace.push(record);
        }
        let n = outcome.trace.iter().filter(|r| r.epoch == epoch).count();
        let mean_loss = if n == 0 { 0.0 } else { sum / n as f64 };

        let mut report = EpochReport {
            epoch,
            mean_loss,
            valid_mrr: None,
            improved: false,
        };
        let validate = config.eval_every > 0 && epoch % config.eval_every == 0 && !data.split.valid.is_empty();
        if validate {
            let mrr = validation_mrr(model, data, config)?;
            report.valid_mrr = Some(mrr);
            if best.as_ref().is_none_or(|(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, model.store.clone()));
                report.improved = true;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log::info!(
            "epoch {epoch}: mean loss {mean_loss:.5}{}",
            report
                .valid_mrr
                .map(|m| format!(", valid MRR {m:.4}"))
                .unwrap_or_default()
        );
        outcome.epochs.push(report);
        on_epoch(&report, model)?;
        if config.patience > 0 && stale >= config.patience {
            log::info!("stopping: no validation improvement in {stale} rounds");
            break;
        }
    }
    if let Some((mrr, epoch, _)) = &best {
        outcome.best_epoch = Some(*epoch);
        outcome.best_valid_mrr = Some(*mrr);
    }
    restore(model, &best);
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut RawNp,
    adam: &mut Adam,
    data: &Dataset,
    config: &TrainConfig,
    motifs: &MotifCache,
    task: crate::kg::FewShotTask,
    epoch: usize,
    entity: u64,
) -> Result<(f64, f64, f64)> {
    let mut neg_rng = rng::stream(config.seed, &[rng::tag::NEGATIVE, epoch as u64, entity]);
    let episode = sample_episode(
        task,
        &data.train_graph,
        config.negatives,
        config.samples,
        model.dim(),
        &mut neg_rng,
    )?;
    let mut drop_rng = rng::stream(config.seed, &[rng::tag::TRAIN, DROPOUT, epoch as u64, entity]);
    let mut mode = Mode {
        train: true,
        dropout: model.config.dropout,
        rng: &mut drop_rng,
    };
    let mut g = Graph::new();
    let terms = elbo_loss(&mut g, model, &episode, motifs, config.margin, config.ablation, &mut mode)?;
    let grads = g.backward(terms.loss)?;
    adam.step(&mut model.store, &grads)?;
    let kl = terms.kl.map(|k| g.scalar(k)).unwrap_or(0.0);
    Ok((g.scalar(terms.loss), kl, g.scalar(terms.rank)))
}

/// Pretrains embeddings on the background graph, zeroes the unseen rows and
/// loads them into a fresh model.
pub fn initialize_model(
    data: &Dataset,
    config: ModelConfig,
    pretrain_config: &PretrainConfig,
    seed: u64,
) -> Result<RawNp> {
    if pretrain_config.dim != config.dim {
        return Err(Error::Invalid(format!(
            "pretraining dimension {} differs from model dimension {}",
            pretrain_config.dim, config.dim
        )));
    }
    let mut table = pretrain(&data.background, pretrain_config)?.table;
    let mut unseen: Vec<EntityId> = data.unseen.iter().copied().collect();
    unseen.sort();
    init_unseen(&mut table, &unseen);
    let mut model = RawNp::new(config, rng::derive(seed, &[rng::tag::INIT]));
    model.load_embeddings(&table)?;
    Ok(model)
}

/// Filtered validation MRR at the configured `k`.
pub fn validation_mrr(model: &RawNp, data: &Dataset, config: &TrainConfig) -> Result<f64> {
    let seed = rng::derive(config.seed, &[rng::tag::EVAL]);
    let (tasks, _) = build_tasks(data, &data.split.valid, config.k, seed)?;
    if tasks.is_empty() {
        return Err(Error::Invalid(format!(
            "no validation entity has more than k={} triples",
            config.k
        )));
    }
    let evaluator = Evaluator::new(model, data, &config.walks, seed)?;
    Ok(evaluator.evaluate(&tasks, RankMode::Filtered)?.overall.mrr)
}
