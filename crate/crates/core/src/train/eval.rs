//! Ranking evaluation.
//!
//! Each query `(u, r, ?)` is scored against every entity with the latent
//! fixed at the prior mean. Ranks use the mean position among tied scores;
//! the filtered protocol drops the other known answers of `(u, r)` before
//! ranking.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use autodiff::{Graph, Matrix, Mode};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::elbo::{latent_from_items, prior_items, support_pairs, MotifRows};
use super::loss::entropy_of_latent;
use super::Dataset;
use crate::error::{Error, Result};
use crate::kg::{make_task, sample_negatives, EntityId, FewShotTask, QueryClass, RelationId};
use crate::model::{CandidateScorer, LatentGaussian, RawNp};
use crate::rng;
use crate::walk::{MotifCache, MotifSet, WalkConfig};

/// Entities encoded per motif batch when tabulating every entity.
const MOTIF_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Raw,
    Filtered,
}

impl RankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RankMode::Raw => "raw",
            RankMode::Filtered => "filtered",
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RankMode::Raw),
            "filtered" => Ok(RankMode::Filtered),
            other => Err(Error::Invalid(format!("unknown rank mode '{other}' (raw|filtered)"))),
        }
    }
}

/// Rank of `truth` among `scores` (distances, lower is better), ignoring the
/// `excluded` entities. Ties count as the mean of the tied positions.
pub fn rank_candidates(scores: &[f64], truth: EntityId, excluded: &[EntityId]) -> Result<f64> {
    if truth.idx() >= scores.len() {
        return Err(Error::UnknownEntity {
            id: truth.0,
            len: scores.len(),
        });
    }
    if excluded.contains(&truth) {
        return Err(Error::TruthFiltered(truth.0));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Invalid(format!("non-finite candidate score {bad}")));
    }
    let skip: HashSet<usize> = excluded.iter().map(|e| e.idx()).collect();
    let target = scores[truth.idx()];
    let (mut better, mut tied) = (0usize, 0usize);
    for (c, s) in scores.iter().enumerate() {
        if c == truth.idx() || skip.contains(&c) {
            continue;
        }
        if *s < target {
            better += 1;
        } else if *s == target {
            tied += 1;
        }
    }
    Ok(better as f64 + 1.0 + tied as f64 / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Invalid("no queries to evaluate".into()));
        }
        let n = ranks.len() as f64;
        let hits = |k: f64| ranks.iter().filter(|r| **r <= k).count() as f64 / n;
        Ok(Self {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
            n_queries: ranks.len(),
        })
    }
}

/// Which query class a report row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassFilter {
    All,
    Only(QueryClass),
}

impl ClassFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassFilter::All => "all",
            ClassFilter::Only(c) => c.as_str(),
        }
    }
}

impl FromStr for ClassFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ClassFilter::All),
            "seen-to-unseen" => Ok(ClassFilter::Only(QueryClass::SeenToUnseen)),
            "unseen-to-unseen" => Ok(ClassFilter::Only(QueryClass::UnseenToUnseen)),
            other => Err(Error::Invalid(format!(
                "unknown query class '{other}' (all|seen-to-unseen|unseen-to-unseen)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOutcome {
    pub entity: EntityId,
    pub relation: RelationId,
    pub answer: EntityId,
    pub class: QueryClass,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub entity: EntityId,
    pub k: usize,
    pub prior: LatentGaussian,
    pub entropy: f64,
    pub queries: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mode: RankMode,
    pub overall: Metrics,
    pub seen_to_unseen: Option<Metrics>,
    pub unseen_to_unseen: Option<Metrics>,
    pub mean_entropy: f64,
    pub n_tasks: usize,
}

impl MetricsReport {
    pub fn from_outcomes(outcomes: &[TaskOutcome], mode: RankMode) -> Result<Self> {
        let ranks = |keep: &dyn Fn(&QueryOutcome) -> bool| -> Vec<f64> {
            outcomes
                .iter()
                .flat_map(|t| &t.queries)
                .filter(|q| keep(q))
                .map(|q| q.rank)
                .collect()
        };
        let by_class = |c: QueryClass| {
            let r = ranks(&|q| q.class == c);
            if r.is_empty() {
                None
            } else {
                Metrics::from_ranks(&r).ok()
            }
        };
        let overall = Metrics::from_ranks(&ranks(&|_| true))?;
        Ok(Self {
            mode,
            overall,
            seen_to_unseen: by_class(QueryClass::SeenToUnseen),
            unseen_to_unseen: by_class(QueryClass::UnseenToUnseen),
            mean_entropy: outcomes.iter().map(|t| t.entropy).sum::<f64>() / outcomes.len() as f64,
            n_tasks: outcomes.len(),
        })
    }

    pub fn class(&self, filter: ClassFilter) -> Option<&Metrics> {
        match filter {
            ClassFilter::All => Some(&self.overall),
            ClassFilter::Only(QueryClass::SeenToUnseen) => self.seen_to_unseen.as_ref(),
            ClassFilter::Only(QueryClass::UnseenToUnseen) => self.unseen_to_unseen.as_ref(),
        }
    }
}

/// Builds `k`-shot tasks for `entities` over the full graph, skipping
/// entities with fewer than `k + 1` triples. Returns the tasks and the
/// number skipped.
pub fn build_tasks(
    data: &Dataset,
    entities: &[EntityId],
    k: usize,
    seed: u64,
) -> Result<(Vec<FewShotTask>, usize)> {
    let mut tasks = Vec::with_capacity(entities.len());
    let mut skipped = 0;
    for e in entities {
        match make_task(&data.kg, *e, k, seed, &data.unseen) {
            Ok(t) => tasks.push(t),
            Err(Error::TooFewTriples { .. }) => skipped += 1,
            Err(other) => return Err(other),
        }
    }
    if skipped > 0 {
        log::info!("{skipped} of {} entities skipped: fewer than {} triples", entities.len(), k + 1);
    }
    Ok((tasks, skipped))
}

/// Frozen-parameter evaluation state: motif representations of every entity
/// and the candidate-side scoring table.
pub struct Evaluator<'a> {
    model: &'a RawNp,
    data: &'a Dataset,
    motif_table: Matrix,
    scorer: CandidateScorer,
    seed: u64,
}

impl<'a> Evaluator<'a> {
    /// Walks are sampled on the background graph from the `seed`'s
    /// evaluation stream.
    pub fn new(model: &'a RawNp, data: &'a Dataset, walks: &WalkConfig, seed: u64) -> Result<Self> {
        let walk_seed = rng::derive(seed, &[rng::tag::EVAL, rng::tag::WALK]);
        let cache = MotifCache::build(&data.background, walks, walk_seed, 1)?;
        Self::with_motifs(model, data, &cache, seed)
    }

    pub fn with_motifs(model: &'a RawNp, data: &'a Dataset, cache: &MotifCache, seed: u64) -> Result<Self> {
        let motif_table = motif_table(model, cache)?;
        let scorer = CandidateScorer::build(model, &motif_table)?;
        Ok(Self {
            model,
            data,
            motif_table,
            scorer,
            seed,
        })
    }

    /// Prior latent of a task, with deterministic context corruptions.
    pub fn task_prior(&self, task: &FewShotTask) -> Result<LatentGaussian> {
        Ok(self.prior_in_graph(&mut Graph::new(), task)?.1)
    }

    fn prior_in_graph(
        &self,
        g: &mut Graph,
        task: &FewShotTask,
    ) -> Result<(autodiff::Var, LatentGaussian)> {
        let mut neg_rng = rng::stream(
            self.seed,
            &[rng::tag::EVAL, rng::tag::NEGATIVE, task.entity.0 as u64, task.k() as u64],
        );
        let negatives = task
            .support
            .iter()
            .map(|t| Ok(sample_negatives(&self.data.train_graph, task.entity, t.relation, 1, &mut neg_rng)?[0]))
            .collect::<Result<Vec<_>>>()?;
        let items = prior_items(task, &negatives);
        let rows = MotifRows::from_table(g, &self.motif_table, items.iter().map(|i| i.other))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mode = Mode {
            train: false,
            dropout: 0.0,
            rng: &mut rng,
        };
        let u = self.model.embed_unseen(g, &support_pairs(task))?;
        let dist = latent_from_items(g, self.model, u, &items, &rows, &mut mode)?;
        Ok((u, dist.read(g)))
    }

    /// Distances of every entity for each query of the task (latent at the
    /// prior mean).
    pub fn score_task(&self, task: &FewShotTask) -> Result<(LatentGaussian, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let (u, prior) = self.prior_in_graph(&mut g, task)?;
        let d = prior.dim();
        let z = g.constant(Matrix::from_shape_vec((1, d), prior.mean.clone()).expect("1 x d"))?;
        let scores = task
            .query
            .iter()
            .map(|q| {
                let row = self.scorer.query(self.model, &mut g, u, z, q.relation)?;
                Ok(self.scorer.score_all(&row))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((prior, scores))
    }

    pub fn evaluate_task(&self, task: &FewShotTask, mode: RankMode) -> Result<TaskOutcome> {
        let (prior, scores) = self.score_task(task)?;
        let queries = task
            .query
            .iter()
            .zip(&scores)
            .map(|(q, s)| {
                let excluded: Vec<EntityId> = match mode {
                    RankMode::Raw => Vec::new(),
                    RankMode::Filtered => self
                        .data
                        .kg
                        .answers(task.entity, q.relation)
                        .iter()
                        .copied()
                        .filter(|e| *e != q.other)
                        .collect(),
                };
                Ok(QueryOutcome {
                    entity: task.entity,
                    relation: q.relation,
                    answer: q.other,
                    class: q.class,
                    rank: rank_candidates(s, q.other, &excluded)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TaskOutcome {
            entity: task.entity,
            k: task.k(),
            entropy: entropy_of_latent(&prior),
            prior,
            queries,
        })
    }

    pub fn evaluate_outcomes(&self, tasks: &[FewShotTask], mode: RankMode) -> Result<Vec<TaskOutcome>> {
        tasks.iter().map(|t| self.evaluate_task(t, mode)).collect()
    }

    pub fn evaluate(&self, tasks: &[FewShotTask], mode: RankMode) -> Result<MetricsReport> {
        MetricsReport::from_outcomes(&self.evaluate_outcomes(tasks, mode)?, mode)
    }

    pub fn motif_table(&self) -> &Matrix {
        &self.motif_table
    }
}

/// Motif representation of every entity (`|E| x dim`), evaluation mode.
pub fn motif_table(model: &RawNp, cache: &MotifCache) -> Result<Matrix> {
    let n = model.config.num_entities;
    if cache.len() != n {
        return Err(Error::Invalid(format!(
            "motif cache covers {} entities, model has {n}",
            cache.len()
        )));
    }
    let mut table = Matrix::zeros((n, model.dim()));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for start in (0..n).step_by(MOTIF_CHUNK) {
        let end = (start + MOTIF_CHUNK).min(n);
        let sets: Vec<&MotifSet> = (start..end).map(|e| cache.get(EntityId(e as u32))).collect();
        let mut g = Graph::new();
        let mut mode = Mode {
            train: false,
            dropout: 0.0,
            rng: &mut rng,
        };
        let v = model.encode_motif_sets(&mut g, &sets, &mut mode)?;
        table
            .slice_mut(ndarray::s![start..end, ..])
            .assign(g.value(v));
    }
    Ok(table)
}
