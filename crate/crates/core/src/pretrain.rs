//! TransE pretraining of entity and relation embeddings on the visible
//! background graph.
//!
//! Inverse relations (`r + |R|`) are trained as their own rows: every
//! visible triple `(h, r, t)` contributes the positives `(h, r, t)` and
//! `(t, r^-1, h)`.

use autodiff::{Adam, AdamConfig, Graph, Matrix, ParamStore};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// `|E| x dim`
    pub entity: Matrix,
    /// `2|R| x dim`, inverse relations in the upper half.
    pub relation: Matrix,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.entity.ncols()
    }

    pub fn entity_row(&self, e: EntityId) -> ndarray::ArrayView1<'_, f64> {
        self.entity.row(e.idx())
    }

    pub fn relation_row(&self, r: RelationId) -> ndarray::ArrayView1<'_, f64> {
        self.relation.row(r.idx())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub margin: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Fraction of visible triples held out for the early-stopping loss.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            epochs: 500,
            batch_size: 512,
            negatives: 1,
            lr: 1e-3,
            margin: 1.0,
            patience: 20,
            valid_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub table: EmbeddingTable,
    /// Mean training hinge loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
}

/// `||h + r - t||_2`.
pub fn transe_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| {
            let d = h + r - t;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Zeroes the rows of `unseen` entities.
pub fn init_unseen(table: &mut EmbeddingTable, unseen: &[EntityId]) {
    for e in unseen {
        table.entity.row_mut(e.idx()).fill(0.0);
    }
}

fn renormalize_rows(m: &mut Matrix) {
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 1.0 {
            row /= n;
        }
    }
}

pub fn pretrain(kg: &KnowledgeGraph, config: &PretrainConfig) -> Result<PretrainOutcome> {
    pretrain_observed(kg, config, |_| {})
}

/// [`pretrain`] with a hook receiving every positive triple the trainer
/// reads, in oriented form.
pub fn pretrain_observed(
    kg: &KnowledgeGraph,
    config: &PretrainConfig,
    mut observe: impl FnMut(&Triple),
) -> Result<PretrainOutcome> {
    if kg.triples().is_empty() {
        return Err(Error::Invalid("cannot pretrain on an empty graph".into()));
    }
    let n_ent = kg.num_entities();
    let n_rel = kg.num_oriented_relations();
    let d = config.dim;

    let mut positives: Vec<Triple> = Vec::with_capacity(2 * kg.triples().len());
    for t in kg.triples() {
        positives.push(*t);
        positives.push(Triple {
            head: t.tail,
            relation: kg.inverse(t.relation),
            tail: t.head,
        });
    }

    let mut split_rng = rng::stream(config.seed, &[rng::tag::PRETRAIN, u64::MAX]);
    positives.shuffle(&mut split_rng);
    let n_valid = if positives.len() >= 40 {
        ((positives.len() as f64) * config.valid_fraction).floor() as usize
    } else {
        0
    };
    let valid = positives.split_off(positives.len() - n_valid);
    let valid_neg: Vec<Triple> = valid
        .iter()
        .map(|t| corrupt(kg, t, &mut split_rng))
        .collect();

    let mut init_rng = rng::stream(config.seed, &[rng::tag::INIT]);
    let bound = 6.0 / (d as f64).sqrt();
    let mut store = ParamStore::new();
    let mut entity = Matrix::from_shape_fn((n_ent, d), |_| init_rng.random_range(-bound..bound));
    renormalize_rows(&mut entity);
    let mut relation = Matrix::from_shape_fn((n_rel, d), |_| init_rng.random_range(-bound..bound));
    for mut row in relation.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    let ent_id = store.add("embed.entity", entity);
    let rel_id = store.add("embed.relation", relation);
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });

    let mut epoch_losses = Vec::new();
    let mut valid_losses = Vec::new();
    let mut best: Option<(f64, Matrix, Matrix)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let mut rng = rng::stream(config.seed, &[rng::tag::PRETRAIN, epoch as u64]);
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut pos = Vec::with_capacity(chunk.len() * config.negatives);
            let mut neg = Vec::with_capacity(chunk.len() * config.negatives);
            for &i in chunk {
                let t = positives[i];
                observe(&t);
                for _ in 0..config.negatives.max(1) {
                    pos.push(t);
                    neg.push(corrupt(kg, &t, &mut rng));
                }
            }
            let mut g = Graph::new();
            let ent = g.param(&store, ent_id)?;
            let rel = g.param(&store, rel_id)?;
            let dp = distances(&mut g, ent, rel, &pos)?;
            let dn = distances(&mut g, ent, rel, &neg)?;
            let diff = g.sub(dp, dn)?;
            let shifted = g.add_scalar(diff, config.margin)?;
            let hinge = g.relu(shifted)?;
            let loss = g.mean(hinge)?;
            total += g.scalar(loss);
            batches += 1;
            let grads = g.backward(loss)?;
            adam.step(&mut store, &grads)?;
        }
        renormalize_rows(store.value_mut(ent_id));
        epoch_losses.push(total / batches.max(1) as f64);

        if !valid.is_empty() {
            let table = EmbeddingTable {
                entity: store.value(ent_id).clone(),
                relation: store.value(rel_id).clone(),
            };
            let vl = hinge_loss(&table, &valid, &valid_neg, config.margin);
            valid_losses.push(vl);
            match &best {
                Some((b, ..)) if vl >= *b - 1e-9 => stale += 1,
                _ => {
                    best = Some((vl, table.entity, table.relation));
                    stale = 0;
                }
            }
            if config.patience > 0 && stale >= config.patience {
                log::info!("pretraining stopped early at epoch {epoch}");
                break;
            }
        }
    }

    let table = match best {
        Some((_, entity, relation)) => EmbeddingTable { entity, relation },
        None => EmbeddingTable {
            entity: store.value(ent_id).clone(),
            relation: store.value(rel_id).clone(),
        },
    };
    Ok(PretrainOutcome {
        table,
        epoch_losses,
        valid_losses,
    })
}

fn distances(
    g: &mut Graph,
    ent: autodiff::Var,
    rel: autodiff::Var,
    triples: &[Triple],
) -> Result<autodiff::Var> {
    let hs: Vec<usize> = triples.iter().map(|t| t.head.idx()).collect();
    let rs: Vec<usize> = triples.iter().map(|t| t.relation.idx()).collect();
    let ts: Vec<usize> = triples.iter().map(|t| t.tail.idx()).collect();
    let h = g.gather(ent, &hs)?;
    let r = g.gather(rel, &rs)?;
    let t = g.gather(ent, &ts)?;
    let hr = g.add(h, r)?;
    let diff = g.sub(hr, t)?;
    Ok(g.row_norm(diff)?)
}

fn hinge_loss(table: &EmbeddingTable, pos: &[Triple], neg: &[Triple], margin: f64) -> f64 {
    let score = |t: &Triple| {
        transe_score(
            table.entity_row(t.head).as_slice().expect("row-major"),
            table.relation_row(t.relation).as_slice().expect("row-major"),
            table.entity_row(t.tail).as_slice().expect("row-major"),
        )
    };
    pos.iter()
        .zip(neg)
        .map(|(p, n)| (margin + score(p) - score(n)).max(0.0))
        .sum::<f64>()
        / pos.len() as f64
}

/// Replaces the head or the tail (even odds) with a uniformly drawn entity,
/// retrying a few times to avoid known triples.
fn corrupt<R: Rng + ?Sized>(kg: &KnowledgeGraph, t: &Triple, rng: &mut R) -> Triple {
    let n = kg.num_entities() as u32;
    let base = |t: &Triple| {
        if t.relation.idx() < kg.num_relations() {
            *t
        } else {
            Triple {
                head: t.tail,
                relation: kg.inverse(t.relation),
                tail: t.head,
            }
        }
    };
    let mut candidate = *t;
    for _ in 0..16 {
        let e = EntityId(rng.random_range(0..n));
        candidate = if rng.random::<bool>() {
            Triple { head: e, ..*t }
        } else {
            Triple { tail: e, ..*t }
        };
        if candidate != *t && !kg.contains(&base(&candidate)) {
            break;
        }
    }
    candidate
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn exact_translation_scores_zero() {
        let h = [0.5, -1.0, 2.0];
        let r = [1.0, 1.0, -0.5];
        let t: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        assert_eq!(transe_score(&h, &r, &t), 0.0);
        assert_eq!(transe_score(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn score_matches_direct_norm_and_is_translation_invariant() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let v = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..7).map(|_| r.random_range(-2.0..2.0)).collect()
            };
            let (h, rel, t, shift) = (v(&mut r), v(&mut r), v(&mut r), v(&mut r));
            let direct: f64 = (0..7)
                .map(|i| (h[i] + rel[i] - t[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((transe_score(&h, &rel, &t) - direct).abs() < 1e-12);
            let hs: Vec<f64> = h.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let ts: Vec<f64> = t.iter().zip(&shift).map(|(a, b)| a + b).collect();
            assert!((transe_score(&hs, &rel, &ts) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn init_unseen_zeroes_rows_idempotently() {
        let mut table = EmbeddingTable {
            entity: Matrix::ones((4, 3)),
            relation: Matrix::ones((2, 3)),
        };
        let before = table.clone();
        init_unseen(&mut table, &[]);
        assert_eq!(table, before);
        init_unseen(&mut table, &[EntityId(2)]);
        let once = table.clone();
        init_unseen(&mut table, &[EntityId(2)]);
        assert_eq!(table, once);
        assert!(table.entity.row(2).iter().all(|v| *v == 0.0));
        assert!(table.entity.row(1).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn empty_graph_is_rejected() {
        let kg = KnowledgeGraph::from_named([("a", "r", "b")]).restrict(|_| false);
        assert!(pretrain(&kg, &PretrainConfig::default()).is_err());
    }
}
