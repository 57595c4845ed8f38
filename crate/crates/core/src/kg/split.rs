//! Unseen-entity selection.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EntityId, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub min_degree: usize,
    pub max_degree: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

/// A replayable unseen-entity partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: Vec<EntityId>,
    pub valid: Vec<EntityId>,
    pub test: Vec<EntityId>,
}

impl Split {
    pub fn unseen(&self) -> HashSet<EntityId> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect()
    }

    /// The graph visible for pretraining and walking: every triple touching
    /// an unseen entity removed.
    pub fn background(&self, kg: &KnowledgeGraph) -> KnowledgeGraph {
        let unseen = self.unseen();
        kg.restrict(|t| !unseen.contains(&t.head) && !unseen.contains(&t.tail))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads an artifact written by [`Split::to_json`], ignoring leading
    /// `#` comment lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let body: String = text
            .lines()
            .skip_while(|l| l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        Self::from_json(&body)
    }
}

/// Selects entities whose degree lies in the spec's bounds, shuffles them
/// with the spec seed and cuts train/valid/test off the front.
pub fn generate_unseen_splits(kg: &KnowledgeGraph, spec: &SplitSpec) -> Result<Split> {
    if spec.min_degree == 0 || spec.max_degree < spec.min_degree {
        return Err(Error::Invalid(format!(
            "degree bounds [{}, {}] must be positive and ordered",
            spec.min_degree, spec.max_degree
        )));
    }
    let mut eligible: Vec<EntityId> = (0..kg.num_entities() as u32)
        .map(EntityId)
        .filter(|e| (spec.min_degree..=spec.max_degree).contains(&kg.degree(*e)))
        .collect();
    if eligible.len() < spec.total() || eligible.is_empty() {
        return Err(Error::InsufficientEntities {
            eligible: eligible.len(),
            needed: spec.total(),
            min: spec.min_degree,
            max: spec.max_degree,
        });
    }
    let mut rng = rng::stream(spec.seed, &[rng::tag::SPLIT]);
    eligible.shuffle(&mut rng);
    let mut it = eligible.into_iter();
    let train = it.by_ref().take(spec.train).collect();
    let valid = it.by_ref().take(spec.valid).collect();
    let test = it.by_ref().take(spec.test).collect();
    Ok(Split {
        spec: *spec,
        train,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> KnowledgeGraph {
        let names: Vec<String> = (0..leaves).map(|i| format!("leaf{i}")).collect();
        KnowledgeGraph::from_named(names.iter().map(|n| ("hub", "r", n.as_str())))
    }

    #[test]
    fn no_eligible_entity_is_an_error() {
        let kg = star(3);
        let spec = SplitSpec {
            min_degree: 10,
            max_degree: 100,
            train: 1,
            valid: 0,
            test: 0,
            seed: 0,
        };
        assert!(matches!(
            generate_unseen_splits(&kg, &spec),
            Err(Error::InsufficientEntities { eligible: 0, .. })
        ));
    }

    #[test]
    fn background_hides_unseen_triples() {
        let kg = KnowledgeGraph::from_named([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")]);
        let split = Split {
            spec: SplitSpec {
                min_degree: 1,
                max_degree: 5,
                train: 1,
                valid: 0,
                test: 0,
                seed: 0,
            },
            train: vec![EntityId(0)],
            valid: vec![],
            test: vec![],
        };
        let bg = split.background(&kg);
        assert_eq!(bg.triples().len(), 1);
        assert_eq!(bg.degree(EntityId(0)), 0);
        assert_eq!(bg.num_entities(), 3);
    }
}
