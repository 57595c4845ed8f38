//! Few-shot task construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::error::{Error, Result};
use crate::rng;

/// Where the unseen entity sits in the original triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// `(u, r, e)`: the relation is used as-is.
    Head,
    /// `(e, r, u)`: rewritten as `(u, r^-1, e)`.
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryClass {
    SeenToUnseen,
    UnseenToUnseen,
}

impl QueryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryClass::SeenToUnseen => "seen-to-unseen",
            QueryClass::UnseenToUnseen => "unseen-to-unseen",
        }
    }
}

/// A triple of the unseen entity `u`, oriented so that `u` is the subject:
/// the query is `(u, relation, ?)` with answer `other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskTriple {
    pub triple: Triple,
    pub orientation: Orientation,
    pub relation: RelationId,
    pub other: EntityId,
    pub class: QueryClass,
}

impl TaskTriple {
    pub fn orient(
        kg: &KnowledgeGraph,
        unseen: EntityId,
        triple: Triple,
        pool: &HashSet<EntityId>,
    ) -> Self {
        let (orientation, relation, other) = if triple.head == unseen {
            (Orientation::Head, triple.relation, triple.tail)
        } else {
            (Orientation::Tail, kg.inverse(triple.relation), triple.head)
        };
        let class = if pool.contains(&other) && other != unseen {
            QueryClass::UnseenToUnseen
        } else {
            QueryClass::SeenToUnseen
        };
        Self {
            triple,
            orientation,
            relation,
            other,
            class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotTask {
    pub entity: EntityId,
    pub support: Vec<TaskTriple>,
    pub query: Vec<TaskTriple>,
}

impl FewShotTask {
    pub fn k(&self) -> usize {
        self.support.len()
    }
}

/// Draws `k` support triples for `entity` uniformly (seeded); the rest of its
/// triples form the query set. `unseen_pool` decides the query classes.
pub fn make_task(
    kg: &KnowledgeGraph,
    entity: EntityId,
    k: usize,
    seed: u64,
    unseen_pool: &HashSet<EntityId>,
) -> Result<FewShotTask> {
    kg.check_entity(entity)?;
    if k == 0 {
        return Err(Error::Invalid("support size K must be at least 1".into()));
    }
    let mut triples: Vec<Triple> = kg.incident_triples(entity).copied().collect();
    if triples.len() < k + 1 {
        return Err(Error::TooFewTriples {
            entity: entity.0,
            available: triples.len(),
            needed: k + 1,
        });
    }
    let mut rng = rng::stream(seed, &[rng::tag::TASK, entity.0 as u64]);
    triples.shuffle(&mut rng);
    let oriented: Vec<TaskTriple> = triples
        .into_iter()
        .map(|t| TaskTriple::orient(kg, entity, t, unseen_pool))
        .collect();
    let (support, query) = oriented.split_at(k);
    Ok(FewShotTask {
        entity,
        support: support.to_vec(),
        query: query.to_vec(),
    })
}
