//! Episode sampling and the per-task training objective.
//!
//! The prior latent is encoded from the support triples (label 1) plus one
//! corrupted triple per support triple (label 0). The posterior adds the
//! query triples (label 1) and one corrupted triple per query (label 0).
//! The loss is the margin ranking hinge averaged over latent samples plus
//! `KL(posterior || prior)`.

use std::collections::BTreeMap;

use autodiff::{Graph, Matrix, Mode, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use super::loss::{kl_graph, margin_rank_graph};
use super::Ablation;
use crate::error::{Error, Result};
use crate::kg::{sample_negatives, EntityId, FewShotTask, KnowledgeGraph, RelationId};
use crate::model::{ContextItem, LatentVars, RawNp};
use crate::walk::{MotifCache, MotifSet};

/// One training draw for a task: every random choice fixed up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task: FewShotTask,
    /// One corrupted answer per support triple.
    pub context_negatives: Vec<EntityId>,
    /// One corrupted answer per query triple (posterior context).
    pub query_negatives: Vec<EntityId>,
    /// `per_query` corrupted answers per query, query-major.
    pub rank_negatives: Vec<EntityId>,
    pub per_query: usize,
    /// One standard-normal vector per latent sample.
    pub noise: Vec<Vec<f64>>,
}

/// Draws the corruptions (filtered against `known`) and latent noise.
pub fn sample_episode<R: Rng + ?Sized>(
    task: FewShotTask,
    known: &KnowledgeGraph,
    per_query: usize,
    samples: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Episode> {
    if samples == 0 {
        return Err(Error::Invalid("at least one latent sample is required".into()));
    }
    let one = |r: RelationId, rng: &mut R| -> Result<EntityId> {
        Ok(sample_negatives(known, task.entity, r, 1, rng)?[0])
    };
    let context_negatives = task
        .support
        .iter()
        .map(|t| one(t.relation, rng))
        .collect::<Result<Vec<_>>>()?;
    let query_negatives = task
        .query
        .iter()
        .map(|t| one(t.relation, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut rank_negatives = Vec::with_capacity(task.query.len() * per_query);
    for t in &task.query {
        rank_negatives.extend(sample_negatives(known, task.entity, t.relation, per_query, rng)?);
    }
    let noise = (0..samples)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    Ok(Episode {
        task,
        context_negatives,
        query_negatives,
        rank_negatives,
        per_query,
        noise,
    })
}

/// Motif representations for a batch of entities, encoded once per distinct
/// entity inside the current graph.
pub(crate) struct MotifRows {
    table: Var,
    row_of: BTreeMap<EntityId, usize>,
}

impl MotifRows {
    pub(crate) fn encode<R: Rng + ?Sized>(
        g: &mut Graph,
        model: &RawNp,
        motifs: &MotifCache,
        entities: impl IntoIterator<Item = EntityId>,
        mode: &mut Mode<'_, R>,
    ) -> Result<Self> {
        let mut row_of = BTreeMap::new();
        for e in entities {
            let next = row_of.len();
            row_of.entry(e).or_insert(next);
        }
        let mut order = vec![EntityId(0); row_of.len()];
        for (e, i) in &row_of {
            order[*i] = *e;
        }
        let sets: Vec<&MotifSet> = order.iter().map(|e| motifs.get(*e)).collect();
        let table = model.encode_motif_sets(g, &sets, mode)?;
        Ok(Self { table, row_of })
    }

    /// Rows from a precomputed entity-indexed table, as a constant.
    pub(crate) fn from_table(
        g: &mut Graph,
        table: &Matrix,
        entities: impl IntoIterator<Item = EntityId>,
    ) -> Result<Self> {
        let mut row_of = BTreeMap::new();
        for e in entities {
            let next = row_of.len();
            row_of.entry(e).or_insert(next);
        }
        let mut rows = vec![0; row_of.len()];
        for (e, i) in &row_of {
            rows[*i] = e.idx();
        }
        let table = g.constant(table.select(ndarray::Axis(0), &rows))?;
        Ok(Self { table, row_of })
    }

    pub(crate) fn rows(&self, g: &mut Graph, entities: &[EntityId]) -> Result<Var> {
        let idx: Vec<usize> = entities.iter().map(|e| self.row_of[e]).collect();
        Ok(g.gather(self.table, &idx)?)
    }
}

/// Context items of the prior: support (label 1) then corruptions (label 0).
pub(crate) fn prior_items(task: &FewShotTask, negatives: &[EntityId]) -> Vec<ContextItem> {
    let pos = task.support.iter().map(|t| ContextItem {
        relation: t.relation,
        other: t.other,
        label: 1.0,
    });
    let neg = task.support.iter().zip(negatives).map(|(t, e)| ContextItem {
        relation: t.relation,
        other: *e,
        label: 0.0,
    });
    pos.chain(neg).collect()
}

/// Encodes a context set into its latent distribution.
pub(crate) fn latent_from_items<R: Rng + ?Sized>(
    g: &mut Graph,
    model: &RawNp,
    u: Var,
    items: &[ContextItem],
    motifs: &MotifRows,
    mode: &mut Mode<'_, R>,
) -> Result<LatentVars> {
    let others: Vec<EntityId> = items.iter().map(|i| i.other).collect();
    let m = motifs.rows(g, &others)?;
    let c = model.encode_context(g, u, items, m, mode)?;
    let z = model.aggregate(g, c)?;
    model.latent_dist(g, z, mode)
}

pub(crate) fn support_pairs(task: &FewShotTask) -> Vec<(RelationId, EntityId)> {
    task.support.iter().map(|t| (t.relation, t.other)).collect()
}

/// Scalar nodes of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub loss: Var,
    pub kl: Option<Var>,
    pub rank: Var,
}

/// Builds the task objective in `g`.
pub fn elbo_loss<R: Rng + ?Sized>(
    g: &mut Graph,
    model: &RawNp,
    episode: &Episode,
    motifs: &MotifCache,
    margin: f64,
    ablation: Ablation,
    mode: &mut Mode<'_, R>,
) -> Result<ElboTerms> {
    let task = &episode.task;
    if task.query.is_empty() {
        return Err(Error::Invalid(format!(
            "task for entity {} has an empty query set",
            task.entity
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::Invalid(format!("margin must be positive, got {margin}")));
    }
    if episode.context_negatives.len() != task.support.len()
        || episode.query_negatives.len() != task.query.len()
        || episode.rank_negatives.len() != task.query.len() * episode.per_query
    {
        return Err(Error::Invalid("episode corruptions do not match the task".into()));
    }
    let answers: Vec<EntityId> = task.query.iter().map(|t| t.other).collect();
    let needed = task
        .support
        .iter()
        .map(|t| t.other)
        .chain(episode.context_negatives.iter().copied())
        .chain(answers.iter().copied())
        .chain(episode.query_negatives.iter().copied())
        .chain(episode.rank_negatives.iter().copied());
    let motif_rows = MotifRows::encode(g, model, motifs, needed, mode)?;

    let u = model.embed_unseen(g, &support_pairs(task))?;
    let prior_ctx = prior_items(task, &episode.context_negatives);
    let prior = latent_from_items(g, model, u, &prior_ctx, &motif_rows, mode)?;

    let (zs, kl) = match ablation {
        Ablation::NoNp => (vec![prior.mean], None),
        Ablation::Full | Ablation::NoRaw => {
            let mut post_ctx = prior_ctx.clone();
            post_ctx.extend(task.query.iter().map(|t| ContextItem {
                relation: t.relation,
                other: t.other,
                label: 1.0,
            }));
            post_ctx.extend(task.query.iter().zip(&episode.query_negatives).map(|(t, e)| {
                ContextItem {
                    relation: t.relation,
                    other: *e,
                    label: 0.0,
                }
            }));
            let post = latent_from_items(g, model, u, &post_ctx, &motif_rows, mode)?;
            let zs = episode
                .noise
                .iter()
                .map(|eps| model.sample_latent(g, post, eps))
                .collect::<Result<Vec<_>>>()?;
            (zs, Some(kl_graph(g, post, prior)?))
        }
    };

    let n = answers.len();
    let mut relations: Vec<RelationId> = task.query.iter().map(|t| t.relation).collect();
    for t in &task.query {
        relations.extend(std::iter::repeat_n(t.relation, episode.per_query));
    }
    let mut candidates = answers.clone();
    candidates.extend(episode.rank_negatives.iter().copied());
    let cand_motifs = motif_rows.rows(g, &candidates)?;
    let pos_rows: Vec<usize> = (0..n).collect();
    let neg_rows: Vec<usize> = (n..candidates.len()).collect();

    let mut total: Option<Var> = None;
    for z in &zs {
        let scores = model.decode(g, u, &relations, &candidates, *z, cand_motifs, mode)?;
        let pos = g.gather(scores, &pos_rows)?;
        let neg = g.gather(scores, &neg_rows)?;
        let term = margin_rank_graph(g, pos, neg, episode.per_query, margin)?;
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    let total = total.expect("at least one latent sample");
    let rank = g.scale(total, 1.0 / zs.len() as f64)?;
    let loss = match kl {
        Some(k) => g.add(rank, k)?,
        None => rank,
    };
    Ok(ElboTerms { loss, kl, rank })
}
