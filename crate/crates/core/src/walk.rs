//! Relational anonymous walks.
//!
//! A random walk from an entity yields a relational path (the sequence of
//! oriented relation ids it traversed). Anonymizing the path replaces each
//! relation by the 1-based position of its first occurrence, so
//! `(a, b, a, c)` becomes `(1, 2, 1, 4)`. The resulting motif keeps the
//! repetition structure of the path and forgets relation identities.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalPath {
    pub start: EntityId,
    pub relations: Vec<RelationId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationalMotif {
    pub codes: Vec<u16>,
}

impl RelationalMotif {
    /// Dash-joined codes, e.g. `1-2-3-2`.
    pub fn label(&self) -> String {
        self.codes
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifSet {
    pub owner: EntityId,
    pub motifs: Vec<RelationalMotif>,
    /// Set when the owner has no edges to walk from.
    pub isolated: bool,
}

impl MotifSet {
    pub fn empty(owner: EntityId) -> Self {
        Self {
            owner,
            motifs: Vec::new(),
            isolated: true,
        }
    }
}

/// Walk parameters: `walks` paths per entity, each at most `length` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks: usize,
    pub length: usize,
    pub inverse_edges: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks: 5,
            length: 10,
            inverse_edges: true,
        }
    }
}

/// Samples one walk of at most `length` steps from `start`, choosing each
/// step uniformly among the current entity's edges. The walk stops early at
/// an entity with no usable edge.
pub fn random_walk<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    start: EntityId,
    length: usize,
    inverse_edges: bool,
    rng: &mut R,
) -> Result<RelationalPath> {
    kg.check_entity(start)?;
    if length == 0 {
        return Err(Error::Invalid("walk length must be at least 1".into()));
    }
    let usable = |e: EntityId| -> Vec<(RelationId, EntityId)> {
        kg.edges(e)
            .iter()
            .filter(|edge| inverse_edges || edge.direction == Direction::Forward)
            .map(|edge| (edge.relation, edge.neighbor))
            .collect()
    };
    let mut relations = Vec::with_capacity(length);
    let mut at = start;
    for _ in 0..length {
        let options = usable(at);
        if options.is_empty() {
            break;
        }
        let (rel, next) = options[rng.random_range(0..options.len())];
        relations.push(rel);
        at = next;
    }
    if relations.is_empty() {
        return Err(Error::NoEdges { entity: start.0 });
    }
    Ok(RelationalPath { start, relations })
}

/// Replaces every relation with the 1-based position of its first
/// occurrence in the path.
pub fn anonymize(path: &RelationalPath) -> RelationalMotif {
    anonymize_relations(&path.relations)
}

pub fn anonymize_relations(relations: &[RelationId]) -> RelationalMotif {
    let mut first: HashMap<RelationId, u16> = HashMap::with_capacity(relations.len());
    let codes = relations
        .iter()
        .enumerate()
        .map(|(j, r)| *first.entry(*r).or_insert(j as u16 + 1))
        .collect();
    RelationalMotif { codes }
}

/// Runs `walks` independent walks from `entity` and anonymizes each.
/// An entity without edges yields an empty, `isolated` set.
pub fn extract_motifs<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    entity: EntityId,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<MotifSet> {
    kg.check_entity(entity)?;
    let mut motifs = Vec::with_capacity(config.walks);
    for _ in 0..config.walks {
        match random_walk(kg, entity, config.length, config.inverse_edges, rng) {
            Ok(path) => motifs.push(anonymize(&path)),
            Err(Error::NoEdges { .. }) => {
                log::debug!("entity {entity} is isolated; empty motif set");
                return Ok(MotifSet::empty(entity));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(MotifSet {
        owner: entity,
        motifs,
        isolated: false,
    })
}

/// Occurrence counts over all motifs of all sets, most frequent first, ties
/// broken lexicographically on the codes.
pub fn motif_stats<'a, I>(sets: I) -> Vec<(RelationalMotif, usize)>
where
    I: IntoIterator<Item = &'a MotifSet>,
{
    let mut counts: BTreeMap<&RelationalMotif, usize> = BTreeMap::new();
    for set in sets {
        for m in &set.motifs {
            *counts.entry(m).or_default() += 1;
        }
    }
    let mut table: Vec<(RelationalMotif, usize)> =
        counts.into_iter().map(|(m, c)| (m.clone(), c)).collect();
    // Stable sort keeps the BTreeMap's lexicographic order within ties.
    table.sort_by(|a, b| b.1.cmp(&a.1));
    table
}

/// Motif sets for every entity of a graph, one deterministic rng stream per
/// `(seed, entity)` so the result does not depend on worker count.
#[derive(Debug, Clone)]
pub struct MotifCache {
    sets: Vec<MotifSet>,
}

impl MotifCache {
    pub fn build(kg: &KnowledgeGraph, config: &WalkConfig, seed: u64, workers: usize) -> Result<Self> {
        let one = |e: u32| {
            let mut r = rng::stream(seed, &[rng::tag::WALK, e as u64]);
            extract_motifs(kg, EntityId(e), config, &mut r)
        };
        let n = kg.num_entities() as u32;
        let sets = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Invalid(e.to_string()))?;
            pool.install(|| (0..n).into_par_iter().map(one).collect::<Result<Vec<_>>>())?
        } else {
            (0..n).map(one).collect::<Result<Vec<_>>>()?
        };
        Ok(Self { sets })
    }

    pub fn get(&self, e: EntityId) -> &MotifSet {
        &self.sets[e.idx()]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
