use rand::Rng;

use super::{EntityId, KnowledgeGraph, RelationId};
use crate::error::{Error, Result};

const MAX_REJECTIONS: usize = 64;

/// Draws `n` corrupted answers for the query `(entity, relation, ?)`:
/// entities chosen uniformly among those that are neither `entity` itself
/// nor a known answer in `kg`. Draws are with replacement.
pub fn sample_negatives<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    entity: EntityId,
    relation: RelationId,
    n: usize,
    rng: &mut R,
) -> Result<Vec<EntityId>> {
    if n == 0 {
        return Err(Error::Invalid("negative sample count must be at least 1".into()));
    }
    let num = kg.num_entities() as u32;
    let known = kg.answers(entity, relation);
    let valid = |c: EntityId| c != entity && !known.contains(&c);

    let mut out = Vec::with_capacity(n);
    let mut pool: Option<Vec<EntityId>> = None;
    while out.len() < n {
        if pool.is_none() {
            let mut found = None;
            for _ in 0..MAX_REJECTIONS {
                let c = EntityId(rng.random_range(0..num));
                if valid(c) {
                    found = Some(c);
                    break;
                }
            }
            if let Some(c) = found {
                out.push(c);
                continue;
            }
            // Dense answer sets: switch to sampling from the explicit pool.
            pool = Some((0..num).map(EntityId).filter(|c| valid(*c)).collect());
        }
        let p = pool.as_ref().expect("pool built above");
        if p.is_empty() {
            return Err(Error::NegativePoolExhausted {
                entity: entity.0,
                relation: relation.0,
            });
        }
        out.push(p[rng.random_range(0..p.len())]);
    }
    Ok(out)
}
