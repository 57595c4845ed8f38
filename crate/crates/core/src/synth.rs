//! Planted-pattern synthetic knowledge graph.
//!
//! Entities fall into four types (`A`, `B`, `C`, `D`) of equal size, each
//! cut into clusters. Edges go from a source cluster to the cluster with the
//! same index in the target type, with a small fraction rewired uniformly:
//!
//! | relation | pattern                   |
//! |----------|---------------------------|
//! | `r0`     | `A -> B`                  |
//! | `r1`     | `B -> C`                  |
//! | `r2`     | `r0` then `r1` (composed) |
//! | `r3`     | `C -> D`                  |
//! | `r4`     | `D -> A`                  |
//! | `r5`     | `A -> A`                  |
//! | `r6`     | `B -> D`                  |
//! | `r7`     | `C -> C`                  |
//!
//! Every `a -r0-> b -r1-> c` path yields `a -r2-> c`, so `r2` closes a
//! triangle whose relational motif repeats the same structure everywhere.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{Dictionary, KnowledgeGraph, SplitSpec, Triple};
use crate::rng;

const TYPES: usize = 4;
const RELATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub entities: usize,
    pub clusters: usize,
    /// Out-edges per source entity for the base relations `r0`, `r1`, `r3`,
    /// `r4`; the auxiliary relations use one.
    pub out_degree: usize,
    /// Probability that an edge target is drawn from the whole target type.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            clusters: 5,
            out_degree: 3,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Unseen-entity split sized for the default planted graph.
pub fn planted_split_spec(seed: u64) -> SplitSpec {
    SplitSpec {
        min_degree: 4,
        max_degree: 40,
        train: 30,
        valid: 10,
        test: 10,
        seed,
    }
}

pub fn planted_graph(config: &PlantedConfig) -> Result<KnowledgeGraph> {
    let per_type = config.entities / TYPES;
    if config.clusters == 0
        || config.entities % TYPES != 0
        || per_type % config.clusters != 0
        || per_type / config.clusters < 2
    {
        return Err(Error::Invalid(format!(
            "{} entities cannot form {TYPES} types of {} clusters with at least 2 members",
            config.entities, config.clusters
        )));
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::Invalid(format!("noise {} outside [0, 1]", config.noise)));
    }
    let size = per_type / config.clusters;
    let mut rng = rng::stream(config.seed, &[rng::tag::SYNTH]);
    let entity = |ty: usize, local: usize| (ty * per_type + local) as u32;

    let mut triples = Vec::new();
    let link = |rng: &mut rng::Rng, rel: u32, from: usize, to: usize, per: usize, out: &mut Vec<Triple>| {
        for local in 0..per_type {
            let cluster = local / size;
            for _ in 0..per {
                let target = if rng.random_bool(config.noise) {
                    rng.random_range(0..per_type)
                } else {
                    cluster * size + rng.random_range(0..size)
                };
                let (h, t) = (entity(from, local), entity(to, target));
                if h != t {
                    out.push(Triple::new(h, rel, t));
                }
            }
        }
    };
    let (a, b, c, d) = (0, 1, 2, 3);
    let deg = config.out_degree;
    link(&mut rng, 0, a, b, deg, &mut triples);
    link(&mut rng, 1, b, c, deg, &mut triples);
    link(&mut rng, 3, c, d, deg, &mut triples);
    link(&mut rng, 4, d, a, deg, &mut triples);
    link(&mut rng, 5, a, a, 1, &mut triples);
    link(&mut rng, 6, b, d, 1, &mut triples);
    link(&mut rng, 7, c, c, 1, &mut triples);

    let mut composed = Vec::new();
    for first in triples.iter().filter(|t| t.relation.0 == 0) {
        for second in triples.iter().filter(|t| t.relation.0 == 1 && t.head == first.tail) {
            composed.push(Triple::new(first.head.0, 2, second.tail.0));
        }
    }
    triples.extend(composed);

    let mut entities = Dictionary::default();
    for i in 0..config.entities {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = Dictionary::default();
    for r in 0..RELATIONS {
        relations.intern(&format!("r{r}"));
    }
    Ok(KnowledgeGraph::from_parts(entities, relations, triples))
}
